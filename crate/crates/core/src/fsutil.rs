use std::path::Path;

use crate::error::{Error, Result};

/// Writes `contents`, refusing to replace an existing file unless `force`.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>, force: bool) -> Result<()> {
    if !force && path.exists() {
        return Err(Error::Exists(path.to_path_buf()));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
