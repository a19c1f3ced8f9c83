use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::StoreError;

/// Environment variable for crash testing. When it is set to
/// `abort-before-rename` the process aborts after every staged file is
/// durable and before the first rename.
pub const FAULT_ENV: &str = "PARLRAG_FAULT";

/// A set of files written side by side and then renamed into place together.
///
/// Staged content lives in `.<name>.tmp` next to its target and is fsynced
/// before [`commit`](Self::commit) renames anything, so a crash at any point
/// leaves each visible file either fully old or fully new. Dropping an
/// uncommitted batch removes its temporaries.
#[derive(Debug, Default)]
pub struct AtomicBatch {
    staged: Vec<(PathBuf, PathBuf)>,
}

fn temp_path(target: &Path) -> PathBuf {
    let name = target
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    target.with_file_name(format!(".{name}.tmp"))
}

impl AtomicBatch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stages a file whose content is produced by `write`.
    pub fn stage_with<F>(&mut self, target: &Path, write: F) -> Result<(), StoreError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let temp = temp_path(target);
        let io_err = |e| StoreError::io(&temp, e);
        let file = File::create(&temp).map_err(io_err)?;
        let mut writer = BufWriter::new(file);
        write(&mut writer).map_err(io_err)?;
        let file = writer.into_inner().map_err(|e| io_err(e.into_error()))?;
        file.sync_all().map_err(io_err)?;
        self.staged.push((temp, target.to_path_buf()));
        Ok(())
    }

    pub fn stage_bytes(&mut self, target: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        self.stage_with(target, |w| w.write_all(bytes))
    }

    pub fn stage_jsonl<'a, T, I>(&mut self, target: &Path, records: I) -> Result<usize, StoreError>
    where
        T: Serialize + 'a,
        I: IntoIterator<Item = &'a T>,
    {
        let mut count = 0;
        self.stage_with(target, |w| {
            for record in records {
                serde_json::to_writer(&mut *w, record)?;
                w.write_all(b"\n")?;
                count += 1;
            }
            Ok(())
        })?;
        Ok(count)
    }

    pub fn commit(mut self) -> Result<(), StoreError> {
        if !self.staged.is_empty() && std::env::var(FAULT_ENV).as_deref() == Ok("abort-before-rename") {
            std::process::abort();
        }
        let staged = std::mem::take(&mut self.staged);
        let mut dirs: Vec<PathBuf> = Vec::new();
        for (i, (temp, target)) in staged.iter().enumerate() {
            if let Err(e) = fs::rename(temp, target) {
                for (rest, _) in &staged[i..] {
                    let _ = fs::remove_file(rest);
                }
                return Err(StoreError::io(target, e));
            }
            if let Some(parent) = target.parent() {
                if !dirs.iter().any(|d| d == parent) {
                    dirs.push(parent.to_path_buf());
                }
            }
        }
        for dir in dirs {
            // Persist the directory entries; not every platform allows
            // opening a directory, so failures here are ignored.
            if let Ok(handle) = File::open(&dir) {
                let _ = handle.sync_all();
            }
        }
        Ok(())
    }
}

impl Drop for AtomicBatch {
    fn drop(&mut self) {
        for (temp, _) in &self.staged {
            let _ = fs::remove_file(temp);
        }
    }
}
