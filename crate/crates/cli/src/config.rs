use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use camtrap_core::dataset::fetch::TOKEN_ENV;
use camtrap_core::Error;

/// Settings read from `--config`. Every field is optional; command-line
/// flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub endpoint: Option<String>,
    pub token: Option<String>,
    pub token_file: Option<PathBuf>,
    pub project: Option<String>,
    pub workers: Option<usize>,
    pub max_attempts: Option<u32>,
    pub min_count: Option<usize>,
    pub other_names: Option<Vec<String>>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub iou: Option<f64>,
    pub conf: Option<f64>,
    pub window: Option<usize>,
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
    /// Directory the file was read from; relative paths resolve against it.
    #[serde(skip)]
    pub base: PathBuf,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of(&text, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Token from the config file, then from the environment.
    pub fn token(&self) -> Result<String, Error> {
        if let Some(t) = &self.token {
            return Ok(t.clone());
        }
        if let Some(file) = &self.token_file {
            let path = self.resolve(file);
            let text = fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
            return Ok(text.trim().to_string());
        }
        match std::env::var(TOKEN_ENV) {
            Ok(t) if !t.trim().is_empty() => Ok(t.trim().to_string()),
            _ => Err(Error::InvalidInput(format!(
                "no API token: set {TOKEN_ENV} or `token_file` in the config file"
            ))),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// First of flag, config value, default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn check_unit(name: &str, v: f64) -> Result<f64, Error> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("{name} {v} outside [0, 1]")))
    }
}
