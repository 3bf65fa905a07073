//! Line-delimited JSON helpers shared by the file-facing modules.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl JsonlError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        JsonlError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Reads every non-blank line of `path` as a `T`, keeping 1-based line numbers.
pub(crate) fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, JsonlError> {
    let file = File::open(path).map_err(|e| JsonlError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| JsonlError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            source,
        })?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

/// Writes one JSON object per line, truncating `path`.
pub(crate) fn write<'a, T, I>(path: &Path, rows: I) -> Result<usize, JsonlError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let file = File::create(path).map_err(|e| JsonlError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| JsonlError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| JsonlError::io(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| JsonlError::io(path, e))?;
    Ok(n)
}
