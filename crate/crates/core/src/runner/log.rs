//! Append-only JSON Lines trial log and run state.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::TrialRecord;

use super::RunnerError;

/// A trial that failed after its retry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub trial_key: String,
    pub sweep: String,
    pub trial_index: u32,
    pub n: u32,
    pub stimulus_id: String,
    pub error: String,
    pub transient: bool,
    pub attempts: u32,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum LogEntry {
    Ok(Box<TrialRecord>),
    Failed(FailedTrial),
}

impl LogEntry {
    pub fn trial_key(&self) -> &str {
        match self {
            LogEntry::Ok(r) => &r.trial_key,
            LogEntry::Failed(f) => &f.trial_key,
        }
    }
}

/// Everything read back from a trial log.
#[derive(Debug, Default)]
pub struct LogContents {
    pub entries: Vec<LogEntry>,
    /// Bytes of a partial trailing line that were dropped.
    pub truncated_bytes: usize,
}

impl LogContents {
    pub fn completed_keys(&self) -> HashSet<String> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Ok(r) => Some(r.trial_key.clone()),
                LogEntry::Failed(_) => None,
            })
            .collect()
    }

    /// Successful records, first occurrence per key.
    pub fn records(&self) -> Vec<&TrialRecord> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Ok(r) if seen.insert(r.trial_key.as_str()) => Some(r.as_ref()),
                _ => None,
            })
            .collect()
    }

    /// Failures for keys that never succeeded, last occurrence per key.
    pub fn outstanding_failures(&self) -> Vec<&FailedTrial> {
        let done = self.completed_keys();
        let mut latest: std::collections::BTreeMap<&str, &FailedTrial> = Default::default();
        for e in &self.entries {
            if let LogEntry::Failed(f) = e {
                if !done.contains(&f.trial_key) {
                    latest.insert(&f.trial_key, f);
                }
            }
        }
        latest.into_values().collect()
    }
}

/// Reads a trial log, dropping a partial trailing line.
pub fn read_log(path: &Path) -> Result<LogContents, RunnerError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(LogContents::default()),
        Err(source) => return Err(RunnerError::Io { path: path.to_path_buf(), source }),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut contents = LogContents { entries: Vec::new(), truncated_bytes: bytes.len() - complete };
    let text = std::str::from_utf8(&bytes[..complete])
        .map_err(|e| RunnerError::CorruptLog(format!("{}: {e}", path.display())))?;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(line).map_err(|e| {
            RunnerError::CorruptLog(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        contents.entries.push(entry);
    }
    Ok(contents)
}

/// Reads the log and cuts a partial trailing line off the file so appends
/// start on a line boundary.
pub fn repair_log(path: &Path) -> Result<LogContents, RunnerError> {
    let contents = read_log(path)?;
    if contents.truncated_bytes > 0 {
        let len = fs::metadata(path).map_err(|source| RunnerError::Io { path: path.to_path_buf(), source })?.len();
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|source| RunnerError::Io { path: path.to_path_buf(), source })?;
        file.set_len(len - contents.truncated_bytes as u64)
            .map_err(|source| RunnerError::Io { path: path.to_path_buf(), source })?;
    }
    Ok(contents)
}

/// Line-at-a-time appender; each entry is flushed before the next is accepted.
pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn open(path: &Path) -> Result<Self, RunnerError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|source| RunnerError::Io { path: dir.to_path_buf(), source })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| RunnerError::Io { path: path.to_path_buf(), source })?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn append(&mut self, entry: &LogEntry) -> Result<(), RunnerError> {
        let mut line = serde_json::to_vec(entry).map_err(|e| RunnerError::CorruptLog(e.to_string()))?;
        line.push(b'\n');
        let io = |source| RunnerError::Io { path: self.path.clone(), source };
        self.out.write_all(&line).map_err(io)?;
        self.out.flush().map_err(|source| RunnerError::Io { path: self.path.clone(), source })
    }
}

/// Persistent identity of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub config_digest: String,
    pub experiment: String,
    pub task: String,
    pub planned_trials: usize,
    pub trial_log: String,
}

impl RunState {
    pub fn load(path: &Path) -> Result<Option<Self>, RunnerError> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| RunnerError::CorruptLog(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(RunnerError::Io { path: path.to_path_buf(), source }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), RunnerError> {
        let text = serde_json::to_string_pretty(self).expect("state serializes");
        write_atomic(path, text.as_bytes())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| RunnerError::Io { path: dir.to_path_buf(), source })?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|source| RunnerError::Io { path: tmp.clone(), source })?;
    fs::rename(&tmp, path).map_err(|source| RunnerError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn failed(key: &str) -> LogEntry {
        LogEntry::Failed(FailedTrial {
            trial_key: key.into(),
            sweep: "s".into(),
            trial_index: 0,
            n: 1,
            stimulus_id: "x".into(),
            error: "boom".into(),
            transient: true,
            attempts: 2,
            timestamp: "t".into(),
        })
    }

    #[test]
    fn partial_trailing_line_is_dropped_and_cut() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        let mut w = LogWriter::open(&path).unwrap();
        w.append(&failed("k1")).unwrap();
        w.append(&failed("k2")).unwrap();
        drop(w);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"status":"failed","trial_k"#).unwrap();
        drop(f);
        let c = repair_log(&path).unwrap();
        assert_eq!(c.entries.len(), 2);
        assert!(c.truncated_bytes > 0);
        let again = read_log(&path).unwrap();
        assert_eq!(again.truncated_bytes, 0);
        assert_eq!(again.entries.len(), 2);
        assert_eq!(again.outstanding_failures().len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.jsonl");
        fs::write(&path, "not json\n").unwrap();
        assert!(matches!(read_log(&path), Err(RunnerError::CorruptLog(_))));
    }

    #[test]
    fn missing_log_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_log(&dir.path().join("none.jsonl")).unwrap().entries.is_empty());
    }
}
