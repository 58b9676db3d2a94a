use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use crate::experiment::ResultSet;

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_result_set(path: &Path, rs: &ResultSet) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(rs)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_result_set(path: &Path) -> Result<ResultSet> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing result set {}", path.display()))
}
