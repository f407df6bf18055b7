use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csv::StringRecord;

use crate::domain::{AttemptStatus, ExecutionOutcome, ResourceAlloc, TraceRecord};
use crate::error::{Error, Result};

pub const TRACE_COLUMNS: [&str; 10] = [
    "workflow",
    "task",
    "machine",
    "input_size_bytes",
    "cpus_alloc",
    "cpu_usage_pct",
    "mem_alloc_bytes",
    "peak_rss_bytes",
    "runtime_s",
    "status",
];

/// A CSV file read into memory with its header resolved by column name.
pub(crate) struct CsvTable {
    pub path: PathBuf,
    columns: HashMap<String, usize>,
    pub records: Vec<StringRecord>,
}

impl CsvTable {
    pub fn read(path: &Path, required: &[&str]) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header = reader.headers()?.clone();
        let columns: HashMap<String, usize> = header
            .iter()
            .enumerate()
            .map(|(i, name)| (name.trim().to_string(), i))
            .collect();
        for &name in required {
            if !columns.contains_key(name) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row: 0,
                    column: name.to_string(),
                    message: "required column missing from header".into(),
                });
            }
        }
        let mut records = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                column: String::new(),
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            records,
        })
    }

    /// Raw field `name` of data row `row` (1-based).
    pub fn raw<'a>(&self, rec: &'a StringRecord, row: usize, name: &str) -> Result<&'a str> {
        self.columns
            .get(name)
            .and_then(|&i| rec.get(i))
            .map(str::trim)
            .ok_or_else(|| self.parse_error(row, name, "missing field"))
    }

    pub fn get<T: FromStr>(&self, rec: &StringRecord, row: usize, name: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(rec, row, name)?;
        raw.parse::<T>()
            .map_err(|e| self.parse_error(row, name, format!("cannot parse `{raw}`: {e}")))
    }

    pub fn parse_error(&self, row: usize, column: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            row,
            column: column.to_string(),
            message: message.into(),
        }
    }

    /// Parses the trace columns of one row and checks record invariants.
    pub fn trace_record(&self, rec: &StringRecord, row: usize) -> Result<TraceRecord> {
        let status_raw = self.raw(rec, row, "status")?;
        let status = AttemptStatus::parse(status_raw).ok_or_else(|| {
            self.parse_error(
                row,
                "status",
                format!("expected `success` or `oom`, got `{status_raw}`"),
            )
        })?;
        let alloc = ResourceAlloc {
            cpus: self.get(rec, row, "cpus_alloc")?,
            mem_bytes: self.get(rec, row, "mem_alloc_bytes")?,
        };
        let outcome = ExecutionOutcome {
            runtime_s: self.get(rec, row, "runtime_s")?,
            cpu_usage_pct: self.get(rec, row, "cpu_usage_pct")?,
            peak_rss_bytes: self.get(rec, row, "peak_rss_bytes")?,
            status,
        };
        let record = TraceRecord {
            workflow: self.raw(rec, row, "workflow")?.to_string(),
            task_name: self.raw(rec, row, "task")?.to_string(),
            machine_name: self.raw(rec, row, "machine")?.to_string(),
            input_size_bytes: self.get(rec, row, "input_size_bytes")?,
            alloc,
            outcome,
        };
        let invalid = |message: String| Error::Validation {
            path: self.path.clone(),
            row,
            message,
        };
        if alloc.cpus == 0 || alloc.mem_bytes == 0 {
            return Err(invalid("cpus_alloc and mem_alloc_bytes must be at least 1".into()));
        }
        if record.task_name.is_empty() || record.machine_name.is_empty() {
            return Err(invalid("task and machine must not be empty".into()));
        }
        outcome.validate_against(&alloc).map_err(invalid)?;
        if outcome.cpu_usage_pct > 100.0 * alloc.cpus as f64 {
            log::warn!(
                "{}: row {row}: cpu_usage_pct {} exceeds the {} allocated cores; kept as recorded",
                self.path.display(),
                outcome.cpu_usage_pct,
                alloc.cpus
            );
        }
        Ok(record)
    }
}

/// Loads and validates a trace CSV. Extra columns are ignored; rows are
/// numbered from 1, not counting the header.
pub fn load_traces(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let table = CsvTable::read(path.as_ref(), &TRACE_COLUMNS)?;
    table
        .records
        .iter()
        .enumerate()
        .map(|(i, rec)| table.trace_record(rec, i + 1))
        .collect()
}

/// Trace columns of a record, formatted with shortest round-trip floats.
pub fn trace_fields(r: &TraceRecord) -> [String; 10] {
    [
        r.workflow.clone(),
        r.task_name.clone(),
        r.machine_name.clone(),
        r.input_size_bytes.to_string(),
        r.alloc.cpus.to_string(),
        r.outcome.cpu_usage_pct.to_string(),
        r.alloc.mem_bytes.to_string(),
        r.outcome.peak_rss_bytes.to_string(),
        r.outcome.runtime_s.to_string(),
        r.outcome.status.as_str().to_string(),
    ]
}

pub fn write_traces<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in records {
        w.write_record(trace_fields(r))?;
    }
    w.flush().map_err(|e| Error::io("<trace writer>", e))?;
    Ok(())
}
