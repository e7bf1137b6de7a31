use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::RunError;
use crate::strategies::TrialRecord;

/// What survived in a trial log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLogContents {
    pub trials: Vec<TrialRecord>,
    /// Byte length of the valid prefix.
    pub valid_len: u64,
    /// A trailing partial line was found and ignored.
    pub torn_tail: bool,
}

/// Reads `trials.jsonl`. An unterminated or unparsable final line is the
/// remains of an interrupted write and is dropped; damage anywhere else is
/// an error.
pub fn read_trial_log(path: &Path) -> Result<TrialLogContents, RunError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(TrialLogContents {
                trials: Vec::new(),
                valid_len: 0,
                torn_tail: false,
            })
        }
        Err(e) => return Err(RunError::io(path, e)),
    };
    let mut trials = Vec::new();
    let mut offset = 0usize;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        let rest = &bytes[offset..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Ok(TrialLogContents {
                trials,
                valid_len: offset as u64,
                torn_tail: true,
            });
        };
        let parsed = std::str::from_utf8(&rest[..end])
            .ok()
            .and_then(|s| serde_json::from_str::<TrialRecord>(s).ok());
        match parsed {
            Some(t) => trials.push(t),
            None if offset + end + 1 == bytes.len() => {
                return Ok(TrialLogContents {
                    trials,
                    valid_len: offset as u64,
                    torn_tail: true,
                });
            }
            None => {
                return Err(RunError::Corrupt {
                    path: path.to_owned(),
                    message: format!("line {line_no} is not a trial record"),
                })
            }
        }
        offset += end + 1;
    }
    Ok(TrialLogContents {
        trials,
        valid_len: offset as u64,
        torn_tail: false,
    })
}

/// Append-only JSON-lines writer that syncs after every record.
#[derive(Debug)]
pub struct TrialLog {
    path: PathBuf,
    file: File,
    sync: bool,
}

impl TrialLog {
    /// Opens `path` for appending after cutting it to `valid_len` bytes.
    pub fn open(path: &Path, valid_len: u64, sync: bool) -> Result<Self, RunError> {
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(path)
            .map_err(|e| RunError::io(path, e))?;
        file.set_len(valid_len).map_err(|e| RunError::io(path, e))?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| RunError::io(path, e))?;
        Ok(Self {
            path: path.to_owned(),
            file,
            sync,
        })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<(), RunError> {
        let mut line = serde_json::to_vec(record).expect("record serializes");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .map_err(|e| RunError::io(&self.path, e))?;
        if self.sync {
            self.file
                .sync_data()
                .map_err(|e| RunError::io(&self.path, e))?;
        }
        Ok(())
    }
}

/// Writes `value` as pretty JSON via a temporary file and rename, syncing
/// the file first when `sync` is set.
pub(crate) fn write_json_atomic<T: Serialize>(
    path: &Path,
    value: &T,
    sync: bool,
) -> Result<(), RunError> {
    let tmp = path.with_extension("json.tmp");
    let mut f = File::create(&tmp).map_err(|e| RunError::io(&tmp, e))?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| RunError::io(&tmp, e.into()))?;
    f.write_all(b"\n").map_err(|e| RunError::io(&tmp, e))?;
    if sync {
        f.sync_all().map_err(|e| RunError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| RunError::io(path, e))
}

pub(crate) fn read_json_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    let Ok(f) = File::open(path) else {
        return Vec::new();
    };
    BufReader::new(f)
        .lines()
        .map_while(Result::ok)
        .filter_map(|l| serde_json::from_str(&l).ok())
        .collect()
}
