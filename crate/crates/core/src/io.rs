use std::io::Write;
use std::path::Path;

use crate::error::{NdrError, Result};

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| NdrError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| NdrError::io(&tmp, e))?;
        f.sync_all().map_err(|e| NdrError::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| NdrError::io(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| NdrError::io(path, e))
}
