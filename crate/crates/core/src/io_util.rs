//! Atomic file writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, SaeError};

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| SaeError::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| SaeError::invalid(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| SaeError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| SaeError::io(&tmp, e))?;
    f.sync_all().map_err(|e| SaeError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| SaeError::io(path, e))
}
