use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use super::{CacheKey, Result, ScoreRecord, ScoringError, TokenScores};

/// Directory of score records, one file per entry, named by the lowercase hex
/// digest of the entry's [`CacheKey`].
///
/// Entries are written to a temporary file in the same directory and renamed
/// into place, so concurrent writers never expose a partial file.
#[derive(Debug, Clone)]
pub struct ScoreCache {
    dir: PathBuf,
}

impl ScoreCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| ScoringError::io(&dir, e))?;
        Ok(ScoreCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.to_hex())
    }

    pub fn get_record(&self, key: &CacheKey) -> Result<Option<ScoreRecord>> {
        let path = self.entry_path(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(ScoringError::io(&path, e)),
        };
        let record =
            ScoreRecord::from_json_line(text.trim_end_matches('\n')).map_err(|message| ScoringError::ParseError {
                path: path.display().to_string(),
                line: 1,
                message,
            })?;
        if record.key() != *key {
            return Err(ScoringError::ParseError {
                path: path.display().to_string(),
                line: 1,
                message: format!("entry content hashes to {}, not its file name", record.key()),
            });
        }
        Ok(Some(record))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<TokenScores>> {
        self.get_record(key)?.map(|r| r.to_token_scores()).transpose()
    }

    pub fn put(&self, record: &ScoreRecord) -> Result<CacheKey> {
        let key = record.key();
        let mut tmp = tempfile::Builder::new()
            .prefix(".tmp-")
            .tempfile_in(&self.dir)
            .map_err(|e| ScoringError::io(&self.dir, e))?;
        let mut line = record.to_json_line();
        line.push('\n');
        tmp.write_all(line.as_bytes())
            .and_then(|_| tmp.flush())
            .map_err(|e| ScoringError::io(tmp.path(), e))?;
        let dest = self.entry_path(&key);
        tmp.persist(&dest).map_err(|e| ScoringError::io(&dest, e.error))?;
        Ok(key)
    }

    /// Keys of all entries, sorted by digest.
    pub fn keys(&self) -> Result<Vec<CacheKey>> {
        let mut keys = Vec::new();
        let entries = fs::read_dir(&self.dir).map_err(|e| ScoringError::io(&self.dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| ScoringError::io(&self.dir, e))?;
            if let Some(key) = entry.file_name().to_str().and_then(|n| n.parse().ok()) {
                keys.push(key);
            }
        }
        keys.sort();
        Ok(keys)
    }

    /// Removes every entry and returns how many were removed.
    pub fn clear(&self) -> Result<usize> {
        let keys = self.keys()?;
        for key in &keys {
            let path = self.entry_path(key);
            fs::remove_file(&path).map_err(|e| ScoringError::io(&path, e))?;
        }
        Ok(keys.len())
    }
}
