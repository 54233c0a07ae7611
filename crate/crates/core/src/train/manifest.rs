//! JSON-lines clip manifests: `{"path", "accent", "subset", "duration_s"}`.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accent::AccentId;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub accent: AccentId,
    pub subset: String,
    pub duration_s: f64,
}

impl ManifestEntry {
    pub fn is_native(&self) -> bool {
        self.accent.is_native()
    }

    /// File name without extension, used to name cache and output files.
    pub fn stem(&self) -> String {
        clip_stem(&self.path)
    }
}

pub fn clip_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Parse a manifest. Relative clip paths are resolved against the
/// manifest's directory; blank lines are skipped.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut e: ManifestEntry = serde_json::from_str(&line)
            .map_err(|err| Error::Format(format!("{}:{}: {err}", path.display(), i + 1)))?;
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
        out.push(e);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut f, e).map_err(|err| Error::Format(err.to_string()))?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}
