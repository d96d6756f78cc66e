//! Atomic output: everything is written to a temp file in the target
//! directory and renamed into place only once complete.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::CliError;

/// Output files staged in temp files, published together by `commit`.
#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

impl Staged {
    pub fn new() -> Self {
        Staged::default()
    }

    pub fn add<F>(&mut self, path: &Path, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let tmp = NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            tmp.as_file()
                .set_permissions(std::fs::Permissions::from_mode(0o644))
                .map_err(|e| CliError::io(path, e))?;
        }
        {
            let mut w = BufWriter::new(tmp.as_file());
            fill(&mut w).map_err(|e| CliError::io(path, e))?;
            w.flush().map_err(|e| CliError::io(path, e))?;
        }
        self.files.push((tmp, path.to_path_buf()));
        Ok(())
    }

    pub fn commit(self) -> Result<(), CliError> {
        for (tmp, path) in self.files {
            tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
        }
        Ok(())
    }
}

pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let mut s = Staged::new();
    s.add(path, fill)?;
    s.commit()
}
