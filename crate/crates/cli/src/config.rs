//! Layered configuration (file, then dotted `key=value` overrides) and the
//! run manifest written into every run directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config files or overrides: exit 1.
    Usage(String),
    /// The computation ran but the episode failed: exit 2.
    Domain(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => f.write_str(m),
        }
    }
}

impl From<trackmppi::Error> for CliError {
    fn from(e: trackmppi::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Parse `key.sub=value`; the value is read as JSON when possible, else as a string.
pub fn parse_override(s: &str) -> CliResult<(Vec<String>, Value)> {
    let Some((key, raw)) = s.split_once('=') else {
        return usage(format!("override `{s}` is not key=value"));
    };
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return usage(format!("override `{s}` has an empty key segment"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

/// Set `path` inside `doc`; every segment must already exist.
pub fn apply_override(doc: &mut Value, path: &[String], value: Value) -> CliResult<()> {
    let mut cur = doc;
    for (i, seg) in path.iter().enumerate() {
        let Value::Object(map) = cur else {
            return usage(format!("`{}` is not a table", path[..i].join(".")));
        };
        if !map.contains_key(seg) {
            let mut keys: Vec<&str> = map.keys().map(String::as_str).collect();
            keys.sort_unstable();
            let at = if i == 0 { String::new() } else { format!(" under `{}`", path[..i].join(".")) };
            return usage(format!("unknown key `{seg}`{at}; valid keys: {}", keys.join(", ")));
        }
        cur = map.get_mut(seg).expect("checked above");
    }
    *cur = value;
    Ok(())
}

fn typed<T: DeserializeOwned>(doc: Value, what: &str) -> CliResult<T> {
    serde_json::from_value(doc).map_err(|e| CliError::Usage(format!("{what}: {e}")))
}

/// Apply `overrides` to an in-memory config.
pub fn with_overrides<T>(config: &T, overrides: &[String]) -> CliResult<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut doc = serde_json::to_value(config).map_err(|e| CliError::Usage(e.to_string()))?;
    for o in overrides {
        let (key, value) = parse_override(o)?;
        apply_override(&mut doc, &key, value)?;
    }
    typed(doc, "after overrides")
}

/// A config with all defaults materialized, plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub config: T,
    pub base_dir: PathBuf,
}

/// Read `path`, fill defaults, then apply `overrides` in order.
pub fn load<T>(path: &Path, overrides: &[String]) -> CliResult<Loaded<T>>
where
    T: Serialize + DeserializeOwned,
{
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let first: T = typed(raw, &path.display().to_string())?;
    let config = with_overrides(&first, overrides)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base_dir = fs::canonicalize(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    Ok(Loaded {
        config,
        base_dir,
    })
}

/// Everything needed to re-run a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub created: String,
    pub seed: Option<u64>,
    /// Directory that relative paths in `config` resolve against.
    pub base_dir: PathBuf,
    pub config: Value,
    /// Relative to the run directory.
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    trackmppi::io::write_json(path, value).map_err(Into::into)
}

/// Create `explicit`, or a fresh timestamped directory under `root`.
pub fn make_run_dir(explicit: Option<&Path>, root: &Path, command: &str) -> CliResult<PathBuf> {
    let mk = |p: &Path| fs::create_dir_all(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())));
    if let Some(dir) = explicit {
        mk(dir)?;
        let non_empty = fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false);
        if non_empty {
            return usage(format!("run directory {} is not empty", dir.display()));
        }
        return Ok(dir.to_path_buf());
    }
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    for n in 0.. {
        let name = if n == 0 { format!("{command}-{stamp}") } else { format!("{command}-{stamp}-{n}") };
        let dir = root.join(name);
        if !dir.exists() {
            mk(&dir)?;
            return Ok(dir);
        }
    }
    unreachable!()
}
