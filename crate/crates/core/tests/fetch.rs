mod common;

use std::fs;
use std::time::Duration;

use camtrap_core::dataset::fetch::{fetch_package, FetchOptions, JOURNAL_FILE, MANIFEST_FILE};
use camtrap_core::dataset::Manifest;
use camtrap_core::Error;
use common::{png, record, Route, StubServer, TOKEN};
use serde_json::json;

fn options(stub: &StubServer, dir: &std::path::Path) -> FetchOptions {
    let mut o = FetchOptions::new(stub.endpoint(), TOKEN, dir);
    o.retry.initial_backoff = Duration::from_millis(1);
    o.retry.max_backoff = Duration::from_millis(5);
    o.retry.max_attempts = 3;
    o.timeout = Duration::from_secs(10);
    o
}

#[test]
fn paginated_fetch_is_complete_and_idempotent() {
    let stub = StubServer::start();
    stub.standard_project();
    let dir = tempfile::tempdir().unwrap();

    let first = fetch_package(&options(&stub, dir.path())).unwrap();
    assert_eq!(first.pages, 3);
    assert_eq!(first.listed, 4);
    assert_eq!(first.images, 3);
    assert_eq!(first.downloaded, 3);
    assert_eq!(first.empty, 1);
    assert_eq!(stub.hits("/files/b.png"), 2, "flaky file retried once");

    let path = dir.path().join(MANIFEST_FILE);
    let manifest = Manifest::load(&path).unwrap();
    let ids: Vec<&str> = manifest.images.iter().map(|r| r.image_id.as_str()).collect();
    assert_eq!(ids, ["cam1-001", "cam1-002", "cam2-010"]);
    assert_eq!(manifest.images[1].annotations.len(), 2);
    assert_eq!(manifest.images[2].location_id.as_deref(), Some("cam2"));
    for rec in &manifest.images {
        let media = Manifest::media_path(dir.path(), rec);
        assert!(media.is_file(), "{}", media.display());
        assert!(rec.source_uri.starts_with("media/") && rec.source_uri.ends_with(".png"));
    }
    let bytes = fs::read(&path).unwrap();

    let second = fetch_package(&options(&stub, dir.path())).unwrap();
    assert_eq!(second.downloaded, 0);
    assert_eq!(second.reused, 3);
    assert_eq!(fs::read(&path).unwrap(), bytes);
    assert_eq!(stub.hits("/files/a.png"), 1);
}

#[test]
fn bad_token_aborts_without_manifest() {
    let stub = StubServer::start();
    stub.standard_project();
    let dir = tempfile::tempdir().unwrap();
    let mut o = options(&stub, dir.path());
    o.token = "wrong".into();
    match fetch_package(&o) {
        Err(Error::Auth { status, .. }) => assert_eq!(status, 401),
        other => panic!("expected auth error, got {other:?}"),
    }
    assert_eq!(stub.hits("/api/media/"), 1, "auth failures are not retried");
    assert!(!dir.path().join(MANIFEST_FILE).exists());
}

#[test]
fn failed_media_withholds_manifest_then_resumes() {
    let stub = StubServer::start();
    stub.standard_project();
    stub.set("/files/c.png", Route::Status(500));
    let dir = tempfile::tempdir().unwrap();

    match fetch_package(&options(&stub, dir.path())) {
        Err(Error::PartialFetch {
            failed,
            total,
            failures,
        }) => {
            assert_eq!((failed, total), (1, 3));
            assert_eq!(failures[0].0, "cam2-010");
        }
        other => panic!("expected partial fetch, got {other:?}"),
    }
    assert_eq!(stub.hits("/files/c.png"), 3);
    assert!(!dir.path().join(MANIFEST_FILE).exists());
    assert!(dir.path().join(JOURNAL_FILE).exists());

    stub.set("/files/c.png", Route::Bytes(png(32, 32, 3)));
    let resumed = fetch_package(&options(&stub, dir.path())).unwrap();
    assert_eq!(resumed.reused, 2);
    assert_eq!(resumed.downloaded, 1);
    assert_eq!(Manifest::load(&dir.path().join(MANIFEST_FILE)).unwrap().images.len(), 3);
}

#[test]
fn file_dimensions_override_api() {
    let stub = StubServer::start();
    let page = json!({"next": null, "results": [
        record("x1", "/files/x.png", 10, 10, &[("Fox", [0.1, 0.1, 0.5, 0.5])]),
    ]});
    stub.set("/api/media/", Route::Json(page.to_string()));
    stub.set("/files/x.png", Route::Bytes(png(200, 100, 9)));
    let dir = tempfile::tempdir().unwrap();
    let s = fetch_package(&options(&stub, dir.path())).unwrap();
    assert_eq!(s.size_mismatches, 1);
    let m = Manifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!((m.images[0].size.width(), m.images[0].size.height()), (200, 100));
}

#[test]
fn normalized_annotations_and_malformed_records() {
    let stub = StubServer::start();
    let page = json!({"next": null, "results": [
        {"id": 17, "download_url": "/files/n.png", "annotations": [
            {"species": "Roe Deer", "bbox": [0.25, 0.5, 0.75, 1.0], "coords": "normalized"}
        ]},
        {"id": "broken", "annotations": []},
        {"id": 17, "download_url": "/files/n.png", "annotations": [{"species": "Fox", "bbox": [0, 0, 1, 1]}]},
    ]});
    stub.set("/api/media/", Route::Json(page.to_string()));
    stub.set("/files/n.png", Route::Bytes(png(400, 200, 4)));
    let dir = tempfile::tempdir().unwrap();
    let s = fetch_package(&options(&stub, dir.path())).unwrap();
    assert_eq!((s.images, s.malformed), (1, 2));
    let m = Manifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    let b = &m.images[0].annotations[0].bbox;
    assert_eq!(
        (b.x_min(), b.y_min(), b.x_max(), b.y_max()),
        (100.0, 100.0, 300.0, 200.0)
    );
    assert_eq!(m.images[0].image_id, "17");
}

#[test]
fn unreachable_endpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let mut o = FetchOptions::new("http://127.0.0.1:9/api", TOKEN, dir.path());
    o.retry.max_attempts = 2;
    o.retry.initial_backoff = Duration::from_millis(1);
    assert!(matches!(fetch_package(&o), Err(Error::Remote(_))));
    assert!(!dir.path().join(MANIFEST_FILE).exists());
}
