use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::event::SyscallEvent;

const ARGV_SUMMARY_MAX: usize = 120;

/// One line of the alert stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub seq: u64,
    pub rule: String,
    pub action: String,
    pub container: String,
    pub syscall: String,
    pub argv_summary: String,
    /// Event timestamp (the trace's logical clock), in nanoseconds.
    pub timestamp: u64,
}

impl AlertRecord {
    pub fn for_event(event: &SyscallEvent, rule: &str, action: &str) -> Self {
        AlertRecord {
            seq: event.seq(),
            rule: rule.to_string(),
            action: action.to_string(),
            container: event.container.to_string(),
            syscall: event.syscall().to_string(),
            argv_summary: argv_summary(event),
            timestamp: event.raw.timestamp_ns,
        }
    }
}

/// argv joined by spaces, or the path argument, cut to a bounded length.
pub fn argv_summary(event: &SyscallEvent) -> String {
    let full = match (event.raw.argv(), event.raw.path()) {
        (Some(argv), _) => argv.join(" "),
        (None, Some(path)) => path.to_string(),
        (None, None) => String::new(),
    };
    if full.len() <= ARGV_SUMMARY_MAX {
        return full;
    }
    let mut cut = ARGV_SUMMARY_MAX;
    while !full.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}...", &full[..cut])
}

pub trait AlertSink: Send {
    fn emit(&mut self, record: &AlertRecord) -> io::Result<()>;

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// JSON-lines file sink.
pub struct FileSink {
    out: BufWriter<File>,
}

impl FileSink {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(FileSink {
            out: BufWriter::new(File::create(path)?),
        })
    }
}

impl AlertSink for FileSink {
    fn emit(&mut self, record: &AlertRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Collects records in memory; clones share the same buffer.
#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    records: Arc<Mutex<Vec<AlertRecord>>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> Vec<AlertRecord> {
        self.records.lock().clone()
    }
}

impl AlertSink for MemorySink {
    fn emit(&mut self, record: &AlertRecord) -> io::Result<()> {
        self.records.lock().push(record.clone());
        Ok(())
    }
}

/// Placeholder for a SIEM forwarder. Accepts and discards.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoopSiemSink;

impl AlertSink for NoopSiemSink {
    fn emit(&mut self, _record: &AlertRecord) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Default)]
pub struct AlertSinks {
    sinks: Vec<Box<dyn AlertSink>>,
    emitted: u64,
}

impl AlertSinks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, sink: impl AlertSink + 'static) -> Self {
        self.sinks.push(Box::new(sink));
        self
    }

    pub fn push(&mut self, sink: Box<dyn AlertSink>) {
        self.sinks.push(sink);
    }

    pub fn emit(&mut self, record: &AlertRecord) -> io::Result<()> {
        self.emitted += 1;
        for sink in &mut self.sinks {
            sink.emit(record)?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        for sink in &mut self.sinks {
            sink.flush()?;
        }
        Ok(())
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }
}
