//! Run log: one JSON object per line with the fields of [`LogRecord`]:
//! `iteration`, `loss_total`, `loss_answerability`, `loss_start`,
//! `loss_end`, `lr`, `wall_time_secs`.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use equant_core::train::LogRecord;

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

/// Append-only writer; every record is flushed to disk as it is written.
pub struct RunLog {
    path: PathBuf,
    file: File,
    last: Option<u64>,
}

impl RunLog {
    /// Opens `path` for appending after keeping only records up to
    /// `keep_through` (all of them when `None`; a missing file is empty).
    pub fn open(path: &Path, keep_through: Option<u64>) -> Result<Self> {
        let mut existing = if path.exists() { parse_log(&read_text(path)?)? } else { Vec::new() };
        if let Some(k) = keep_through {
            existing.retain(|r| r.iteration <= k);
        }
        write_atomic(path, render(&existing)?.as_bytes())?;
        let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), file, last: existing.last().map(|r| r.iteration) })
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<()> {
        if self.last.is_some_and(|l| record.iteration <= l) {
            return Err(Error::Config(format!("log iteration {} does not increase", record.iteration)));
        }
        let mut line = serde_json::to_string(record).map_err(|e| Error::Config(e.to_string()))?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))?;
        self.last = Some(record.iteration);
        Ok(())
    }
}

fn render(records: &[LogRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Config(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses a log, requiring strictly increasing iterations.
pub fn parse_log(text: &str) -> Result<Vec<LogRecord>> {
    let mut out: Vec<LogRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: LogRecord =
            serde_json::from_str(line).map_err(|e| Error::Format { line: i + 1, reason: e.to_string() })?;
        if out.last().is_some_and(|p| r.iteration <= p.iteration) {
            return Err(Error::Format { line: i + 1, reason: "iterations must increase".into() });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    parse_log(&read_text(path)?)
}
