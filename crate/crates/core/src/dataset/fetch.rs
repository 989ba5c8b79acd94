//! Ingestion of annotated media from a TRAPPER-style REST API.
//!
//! Contract of the remote side:
//!
//! * `GET {endpoint}/media/[?project=ID]` with an `Authorization: Token <token>`
//!   header returns `{"next": <cursor|url|null>, "results": [record, ...]}`.
//!   A `next` value that parses as a URL is followed as-is; anything else is
//!   sent back as the `cursor` query parameter.
//! * A record is `{"id", "download_url", "width"?, "height"?, "location_id"?,
//!   "sha256"?, "annotations": [{"species", "bbox": [x0, y0, x1, y1],
//!   "coords": "pixel"|"normalized"}]}`.
//! * `download_url` (absolute, or relative to the endpoint) serves the media
//!   bytes with the same authorization header.
//!
//! Media land in `<data_dir>/media/<sha256>.<ext>`. Every finished download
//! is appended to a journal so an interrupted run resumes without fetching
//! the same file twice. The manifest is written only when every record is
//! accounted for.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::{debug, info, warn};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

use super::{Annotation, CoordSpace, ImageRecord, Manifest};
use crate::error::{Error, Result};
use crate::geometry::ImageSize;

/// Environment variable holding the API token.
pub const TOKEN_ENV: &str = "TRAPPER_TOKEN";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MEDIA_DIR: &str = "media";
pub const JOURNAL_FILE: &str = ".fetch-journal.jsonl";

/// Bounded exponential backoff for transient HTTP failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub endpoint: String,
    pub token: String,
    pub project: Option<String>,
    pub data_dir: PathBuf,
    /// Concurrent media downloads.
    pub workers: usize,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl FetchOptions {
    pub fn new(endpoint: impl Into<String>, token: impl Into<String>, data_dir: impl Into<PathBuf>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: token.into(),
            project: None,
            data_dir: data_dir.into(),
            workers: 4,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchSummary {
    pub pages: usize,
    /// Records returned by the listing, before any filtering.
    pub listed: usize,
    /// Records written to the manifest.
    pub images: usize,
    pub downloaded: usize,
    /// Media already present from an earlier run.
    pub reused: usize,
    pub malformed: usize,
    /// Records without annotations; empty images are not part of the dataset.
    pub empty: usize,
    pub size_mismatches: usize,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum IdValue {
    Text(String),
    Number(i64),
}

impl IdValue {
    fn into_string(self) -> String {
        match self {
            IdValue::Text(s) => s,
            IdValue::Number(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct ApiAnnotation {
    species: String,
    bbox: [f64; 4],
    #[serde(default = "default_coords")]
    coords: CoordSpace,
}

fn default_coords() -> CoordSpace {
    CoordSpace::Pixel
}

#[derive(Debug, Deserialize)]
struct ApiRecord {
    id: IdValue,
    download_url: String,
    width: Option<u32>,
    height: Option<u32>,
    location_id: Option<IdValue>,
    sha256: Option<String>,
    #[serde(default)]
    annotations: Vec<ApiAnnotation>,
}

#[derive(Debug)]
struct RemoteMedia {
    image_id: String,
    url: Url,
    reported_size: Option<(u32, u32)>,
    location_id: Option<String>,
    sha256: Option<String>,
    annotations: Vec<ApiAnnotation>,
}

#[derive(Debug, Deserialize)]
struct ListingPage {
    next: Option<serde_json::Value>,
    results: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct JournalEntry {
    image_id: String,
    file: String,
    bytes: u64,
    sha256: String,
}

enum AttemptError {
    Transient(String),
    Fatal(Error),
}

fn retrying<T>(
    policy: &RetryPolicy,
    what: &str,
    mut op: impl FnMut() -> std::result::Result<T, AttemptError>,
) -> Result<T> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match op() {
            Ok(v) => return Ok(v),
            Err(AttemptError::Fatal(e)) => return Err(e),
            Err(AttemptError::Transient(msg)) => {
                if attempt >= policy.max_attempts {
                    return Err(Error::Remote(format!(
                        "{what}: giving up after {attempt} attempts: {msg}"
                    )));
                }
                let delay = policy.delay(attempt);
                warn!("{what}: {msg}; retrying in {delay:?}");
                thread::sleep(delay);
            }
        }
    }
}

struct Remote<'a> {
    client: Client,
    opts: &'a FetchOptions,
}

impl Remote<'_> {
    fn get(&self, url: &Url) -> std::result::Result<Response, AttemptError> {
        let resp = self
            .client
            .get(url.clone())
            .header("Authorization", format!("Token {}", self.opts.token))
            .send()
            .map_err(|e| AttemptError::Transient(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(AttemptError::Fatal(Error::Auth {
                url: url.to_string(),
                status: status.as_u16(),
            }));
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(AttemptError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(Error::Remote(format!("{url}: HTTP {status}"))));
        }
        Ok(resp)
    }

    fn list_all(&self, summary: &mut FetchSummary) -> Result<Vec<RemoteMedia>> {
        let base = endpoint_base(&self.opts.endpoint)?;
        let mut listing = base
            .join("media/")
            .map_err(|e| Error::invalid(format!("bad endpoint: {e}")))?;
        if let Some(p) = &self.opts.project {
            listing.query_pairs_mut().append_pair("project", p);
        }

        let mut records = Vec::new();
        let mut seen_ids = BTreeSet::new();
        let mut seen_pages = BTreeSet::new();
        let mut next = Some(listing.clone());
        while let Some(url) = next.take() {
            if !seen_pages.insert(url.to_string()) {
                return Err(Error::Remote(format!("pagination loops back to {url}")));
            }
            let page: ListingPage = retrying(&self.opts.retry, &format!("list {url}"), || {
                let resp = self.get(&url)?;
                resp.json::<ListingPage>()
                    .map_err(|e| AttemptError::Transient(format!("bad listing body: {e}")))
            })?;
            summary.pages += 1;
            debug!("listing page {} with {} records", summary.pages, page.results.len());

            for raw in page.results {
                summary.listed += 1;
                match parse_record(raw, &base) {
                    Ok(rec) if rec.annotations.is_empty() => {
                        debug!("skipping empty image {}", rec.image_id);
                        summary.empty += 1;
                    }
                    Ok(rec) => {
                        if seen_ids.insert(rec.image_id.clone()) {
                            records.push(rec);
                        } else {
                            warn!("duplicate record id {} skipped", rec.image_id);
                            summary.malformed += 1;
                        }
                    }
                    Err(msg) => {
                        warn!("malformed record skipped: {msg}");
                        summary.malformed += 1;
                    }
                }
            }

            next = match page.next {
                None | Some(serde_json::Value::Null) => None,
                Some(serde_json::Value::String(s)) if s.is_empty() => None,
                Some(serde_json::Value::String(s)) => Some(next_page_url(&listing, &s)),
                Some(serde_json::Value::Number(n)) => Some(next_page_url(&listing, &n.to_string())),
                Some(other) => return Err(Error::Remote(format!("unsupported `next` value {other}"))),
            };
        }
        records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        Ok(records)
    }

    /// Streams one media file into the content-addressed store.
    fn download_into_store(&self, media: &RemoteMedia, media_dir: &Path, data_dir: &Path) -> Result<JournalEntry> {
        let part = media_dir.join(format!(".{}.part", short_hash(&media.image_id)));
        let what = format!("download {}", media.image_id);
        let (sha, bytes) = retrying(&self.opts.retry, &what, || {
            let mut resp = self.get(&media.url)?;
            let mut out = File::create(&part).map_err(|e| AttemptError::Fatal(Error::io(&part, e)))?;
            let mut hasher = Sha256::new();
            let mut buf = vec![0u8; 64 * 1024];
            let mut total = 0u64;
            loop {
                let n = resp
                    .read(&mut buf)
                    .map_err(|e| AttemptError::Transient(format!("body read: {e}")))?;
                if n == 0 {
                    break;
                }
                hasher.update(&buf[..n]);
                out.write_all(&buf[..n])
                    .map_err(|e| AttemptError::Fatal(Error::io(&part, e)))?;
                total += n as u64;
            }
            out.sync_all().map_err(|e| AttemptError::Fatal(Error::io(&part, e)))?;
            let sha = hex::encode(hasher.finalize());
            if let Some(expected) = &media.sha256 {
                if !expected.eq_ignore_ascii_case(&sha) {
                    return Err(AttemptError::Transient(format!(
                        "checksum mismatch: expected {expected}, got {sha}"
                    )));
                }
            }
            Ok((sha, total))
        })?;
        let ext = media_extension(&part, &media.url);
        let name = format!("{sha}.{ext}");
        let dest = media_dir.join(&name);
        fs::rename(&part, &dest).map_err(|e| Error::io(&dest, e))?;
        let file = dest
            .strip_prefix(data_dir)
            .map(|p| p.to_string_lossy().replace('\\', "/"))
            .unwrap_or_else(|_| format!("{MEDIA_DIR}/{name}"));
        Ok(JournalEntry {
            image_id: media.image_id.clone(),
            file,
            bytes,
            sha256: sha,
        })
    }
}

fn endpoint_base(endpoint: &str) -> Result<Url> {
    let mut s = endpoint.trim().to_string();
    if !s.ends_with('/') {
        s.push('/');
    }
    Url::parse(&s).map_err(|e| Error::invalid(format!("bad endpoint {endpoint:?}: {e}")))
}

fn next_page_url(listing: &Url, next: &str) -> Url {
    if let Ok(url) = Url::parse(next) {
        return url;
    }
    let mut url = listing.clone();
    url.query_pairs_mut().append_pair("cursor", next);
    url
}

fn parse_record(raw: serde_json::Value, base: &Url) -> std::result::Result<RemoteMedia, String> {
    let rec: ApiRecord = serde_json::from_value(raw).map_err(|e| e.to_string())?;
    let image_id = rec.id.into_string();
    if image_id.is_empty() {
        return Err("empty id".into());
    }
    let url = base
        .join(&rec.download_url)
        .map_err(|e| format!("{image_id}: bad download_url: {e}"))?;
    let reported_size = match (rec.width, rec.height) {
        (Some(w), Some(h)) if w > 0 && h > 0 => Some((w, h)),
        (None, None) => None,
        (w, h) => return Err(format!("{image_id}: bad dimensions {w:?}x{h:?}")),
    };
    if let Some(a) = rec.annotations.iter().find(|a| a.species.trim().is_empty()) {
        return Err(format!("{image_id}: annotation without species ({:?})", a.bbox));
    }
    Ok(RemoteMedia {
        image_id,
        url,
        reported_size,
        location_id: rec.location_id.map(IdValue::into_string),
        sha256: rec.sha256,
        annotations: rec.annotations,
    })
}

fn short_hash(s: &str) -> String {
    hex::encode(&Sha256::digest(s.as_bytes())[..8])
}

fn load_journal(path: &Path) -> Result<BTreeMap<String, JournalEntry>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut entries = BTreeMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        // A torn final line from an interrupted run is simply ignored.
        if let Ok(entry) = serde_json::from_str::<JournalEntry>(&line) {
            entries.insert(entry.image_id.clone(), entry);
        }
    }
    Ok(entries)
}

fn is_reusable(entry: &JournalEntry, media: &RemoteMedia, data_dir: &Path) -> bool {
    if let Some(expected) = &media.sha256 {
        if !expected.eq_ignore_ascii_case(&entry.sha256) {
            return false;
        }
    }
    fs::metadata(data_dir.join(&entry.file))
        .map(|m| m.is_file() && m.len() == entry.bytes)
        .unwrap_or(false)
}

fn media_extension(path: &Path, url: &Url) -> String {
    let mut header = [0u8; 64];
    let sniffed = File::open(path)
        .and_then(|mut f| f.read(&mut header))
        .ok()
        .and_then(|n| imagesize::image_type(&header[..n]).ok())
        .map(|t| match t {
            imagesize::ImageType::Jpeg => "jpg",
            imagesize::ImageType::Png => "png",
            imagesize::ImageType::Gif => "gif",
            imagesize::ImageType::Bmp => "bmp",
            imagesize::ImageType::Tiff => "tif",
            imagesize::ImageType::Webp => "webp",
            _ => "",
        })
        .filter(|s| !s.is_empty());
    if let Some(ext) = sniffed {
        return ext.to_string();
    }
    url.path_segments()
        .and_then(|mut segs| segs.next_back())
        .and_then(|name| Path::new(name).extension())
        .and_then(|e| e.to_str())
        .filter(|e| !e.is_empty() && e.len() <= 5 && e.chars().all(|c| c.is_ascii_alphanumeric()))
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_else(|| "bin".to_string())
}

fn assemble_record(
    media: &RemoteMedia,
    entry: &JournalEntry,
    data_dir: &Path,
    summary: &mut FetchSummary,
) -> std::result::Result<ImageRecord, String> {
    let path = data_dir.join(&entry.file);
    let from_file = imagesize::size(&path)
        .ok()
        .and_then(|s| Some((u32::try_from(s.width).ok()?, u32::try_from(s.height).ok()?)))
        .filter(|(w, h)| *w > 0 && *h > 0);
    let (w, h) = match (from_file, media.reported_size) {
        (Some(file), Some(api)) if file != api => {
            warn!(
                "{}: API reports {}x{} but media header says {}x{}; using the file",
                media.image_id, api.0, api.1, file.0, file.1
            );
            summary.size_mismatches += 1;
            file
        }
        (Some(file), _) => file,
        (None, Some(api)) => {
            warn!("{}: unreadable media header, using API dimensions", media.image_id);
            api
        }
        (None, None) => return Err(format!("{}: image dimensions unknown", media.image_id)),
    };
    let size = ImageSize::new(w, h).map_err(|e| e.to_string())?;
    let annotations = media
        .annotations
        .iter()
        .map(|a| {
            let bbox = a.coords.to_pixel_box(a.bbox, size)?;
            Annotation::new(a.species.trim(), bbox)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| format!("{}: {e}", media.image_id))?;
    let record = ImageRecord {
        image_id: media.image_id.clone(),
        source_uri: entry.file.clone(),
        size,
        location_id: media.location_id.clone(),
        annotations,
    };
    record.validate().map_err(|e| e.to_string())?;
    Ok(record)
}

/// Downloads the remote project into `opts.data_dir` and writes
/// `manifest.json` there.
///
/// Authorization failures abort immediately. Transient failures are retried
/// per request; media that still fail are reported in
/// [`Error::PartialFetch`] and no manifest is written. Re-running resumes
/// from the journal.
pub fn fetch_package(opts: &FetchOptions) -> Result<FetchSummary> {
    let client = Client::builder()
        .timeout(opts.timeout)
        .build()
        .map_err(|e| Error::Remote(format!("http client: {e}")))?;
    let remote = Remote { client, opts };
    let mut summary = FetchSummary::default();

    let records = remote.list_all(&mut summary)?;
    info!(
        "listing complete: {} records over {} pages ({} usable)",
        summary.listed,
        summary.pages,
        records.len()
    );

    let data_dir = &opts.data_dir;
    let media_dir = data_dir.join(MEDIA_DIR);
    fs::create_dir_all(&media_dir).map_err(|e| Error::io(&media_dir, e))?;
    let journal_path = data_dir.join(JOURNAL_FILE);
    let mut journal = load_journal(&journal_path)?;

    let mut pending = Vec::new();
    for (i, media) in records.iter().enumerate() {
        match journal.get(&media.image_id) {
            Some(entry) if is_reusable(entry, media, data_dir) => summary.reused += 1,
            _ => pending.push(i),
        }
    }

    let journal_file = Mutex::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(|e| Error::io(&journal_path, e))?,
    );
    let next_job = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let workers = opts.workers.max(1).min(pending.len().max(1));

    let outcomes: Vec<(usize, Result<JournalEntry>)> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    while !abort.load(Ordering::SeqCst) {
                        let job = next_job.fetch_add(1, Ordering::SeqCst);
                        let Some(&rec_idx) = pending.get(job) else { break };
                        let media = &records[rec_idx];
                        let result = remote.download_into_store(media, &media_dir, data_dir);
                        match &result {
                            Ok(entry) => {
                                let line = serde_json::to_string(entry).expect("journal entry") + "\n";
                                let mut f = journal_file.lock().expect("journal lock");
                                if let Err(e) = f.write_all(line.as_bytes()).and_then(|_| f.flush()) {
                                    warn!("journal write failed: {e}");
                                }
                            }
                            Err(Error::Auth { .. }) => abort.store(true, Ordering::SeqCst),
                            Err(_) => {}
                        }
                        done.push((rec_idx, result));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("download worker panicked"))
            .collect()
    });

    let mut failures = Vec::new();
    for (idx, outcome) in outcomes {
        match outcome {
            Ok(entry) => {
                summary.downloaded += 1;
                journal.insert(entry.image_id.clone(), entry);
            }
            Err(e @ Error::Auth { .. }) => return Err(e),
            Err(e) => {
                warn!("{}: {e}", records[idx].image_id);
                failures.push((records[idx].image_id.clone(), e.to_string()));
            }
        }
    }
    if !failures.is_empty() {
        failures.sort();
        return Err(Error::PartialFetch {
            failed: failures.len(),
            total: records.len(),
            failures,
        });
    }

    let mut images = Vec::with_capacity(records.len());
    for media in &records {
        let entry = &journal[&media.image_id];
        match assemble_record(media, entry, data_dir, &mut summary) {
            Ok(rec) => images.push(rec),
            Err(msg) => {
                warn!("malformed record skipped: {msg}");
                summary.malformed += 1;
            }
        }
    }
    let classes: BTreeSet<String> = images
        .iter()
        .flat_map(|r| r.annotations.iter().map(|a| a.species_name.clone()))
        .collect();
    let manifest = Manifest::new(classes.into_iter().collect(), images)?;
    summary.images = manifest.images.len();
    manifest.save(&data_dir.join(MANIFEST_FILE))?;
    Ok(summary)
}
