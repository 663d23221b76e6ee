//! JSON-lines session log: one `{t, kind, payload}` object per line, the
//! final line of a finished session being the `metrics` entry.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::SessionMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub kind: String,
    pub payload: serde_json::Value,
}

pub fn write_log(entries: &[LogEntry], mut w: impl Write) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("log has no metrics entry")]
    NoMetrics,
}

pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, LogError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| LogError::Parse { line: i + 1, source }))
        .collect()
}

/// Metrics carried by the last `metrics` entry.
pub fn metrics_of(entries: &[LogEntry]) -> Result<SessionMetrics, LogError> {
    let entry = entries
        .iter()
        .rev()
        .find(|e| e.kind == "metrics")
        .ok_or(LogError::NoMetrics)?;
    serde_json::from_value(entry.payload.clone()).map_err(|source| LogError::Parse {
        line: entries.len(),
        source,
    })
}
