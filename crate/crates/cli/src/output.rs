use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::SCHEMA_VERSION;

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config: &'a C,
    pub seed: Option<u64>,
    pub tool_version: &'static str,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl<'a, C: Serialize> RunManifest<'a, C> {
    pub fn new(command: &'a str, config: &'a C, seed: Option<u64>, outputs: &[&Path], elapsed: std::time::Duration) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            wall_clock_seconds: elapsed.as_secs_f64(),
        }
    }

    /// Writes the manifest next to `out`.
    pub fn write_beside(&self, out: &Path) -> Result<PathBuf> {
        let path = manifest_path(out);
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON of the struct `body` with a leading `schema_version` field.
pub fn versioned_json<T: Serialize>(body: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}
