//! JSON configuration loading with field paths and line numbers in errors.

use crate::{CliError, CliResult, OUT_ENV};
use kinlab::solver::{InitialSpec, RunConfig, SourceSpec};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Configuration schema version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

pub fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Deserialize)]
struct VersionProbe {
    #[serde(default = "schema_version")]
    schema_version: u32,
}

/// Parses a configuration, naming the offending field and position on error.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", probe.schema_version));
    }
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            inner.to_string()
        } else {
            format!("field `{path}`: {inner}")
        }
    })
}

pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|m| CliError::Config(format!("{}: {m}", path.display())))
}

/// Loads `path` when given, otherwise returns the default.
pub fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    path.map(load).unwrap_or_else(|| Ok(T::default()))
}

/// `explicit`, else `$KINLAB_OUT/<kind>`, else `kinlab-out/<kind>`.
pub fn out_dir(explicit: Option<&Path>, kind: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("kinlab-out")).join(kind),
    }
}

/// Replaces every seed inside the initial datum and the source.
pub fn apply_seed(cfg: &mut RunConfig, seed: u64) {
    if let InitialSpec::Rough { seed: s, .. } = &mut cfg.initial {
        *s = seed;
    }
    if let SourceSpec::Noise { seed: s, .. } = &mut cfg.source {
        *s = seed;
    }
}
