use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{strategy_report, AttemptLedgerRow, StrategyReport, WastageMetrics};
use super::runner::ExperimentOutput;
use super::StrategyId;
use crate::error::{Error, Result};
use crate::simulator::{trace_fields, CsvTable, TRACE_COLUMNS};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Columns appended to the trace columns in a ledger file.
pub const LEDGER_EXTRA_COLUMNS: [&str; 6] = ["strategy", "episode", "instance", "attempt", "reward", "cpu_reward"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub seed: u64,
    /// The effective configuration, defaults filled in.
    pub config: ExperimentConfig,
    pub strategies: BTreeMap<StrategyId, StrategyReport>,
}

impl AggregateReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::invalid(
                "aggregate report",
                format!("unsupported schema_version {}", report.schema_version),
            ));
        }
        Ok(report)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_ledger<W: Write>(out: W, rows: &[AttemptLedgerRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS.iter().chain(LEDGER_EXTRA_COLUMNS.iter()))?;
    for r in rows {
        let extra = [
            r.strategy.as_str().to_string(),
            r.episode.to_string(),
            r.instance.to_string(),
            r.attempt.to_string(),
            opt(r.reward),
            opt(r.cpu_reward),
        ];
        w.write_record(trace_fields(&r.record).iter().chain(extra.iter()))?;
    }
    w.flush().map_err(|e| Error::io("<ledger writer>", e))?;
    Ok(())
}

/// Loads a ledger written by [`write_ledger`].
pub fn load_ledger(path: impl AsRef<Path>) -> Result<Vec<AttemptLedgerRow>> {
    let required: Vec<&str> = TRACE_COLUMNS
        .iter()
        .chain(LEDGER_EXTRA_COLUMNS.iter())
        .copied()
        .collect();
    let table = CsvTable::read(path.as_ref(), &required)?;
    let optional = |rec: &csv::StringRecord, row: usize, name: &str| -> Result<Option<f64>> {
        match table.raw(rec, row, name)? {
            "" => Ok(None),
            _ => table.get(rec, row, name).map(Some),
        }
    };
    table
        .records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let row = i + 1;
            let raw = table.raw(rec, row, "strategy")?;
            let strategy = StrategyId::parse(raw)
                .ok_or_else(|| table.parse_error(row, "strategy", format!("unknown strategy `{raw}`")))?;
            Ok(AttemptLedgerRow {
                strategy,
                episode: table.get(rec, row, "episode")?,
                instance: table.get(rec, row, "instance")?,
                attempt: table.get(rec, row, "attempt")?,
                record: table.trace_record(rec, row)?,
                reward: optional(rec, row, "reward")?,
                cpu_reward: optional(rec, row, "cpu_reward")?,
            })
        })
        .collect()
}

pub fn ledger_file_name(strategy: StrategyId) -> String {
    format!("ledger_{}.csv", strategy.as_str())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `aggregate.json`, one `ledger_<strategy>.csv` per strategy and the
/// final agent state under `snapshots/`. Returns the files written.
pub fn emit_report(dir: impl AsRef<Path>, output: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let snap_dir = dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("aggregate.json");
    write_file(&path, output.report.to_json()?.as_bytes())?;
    written.push(path);

    for (id, rows) in &output.ledgers {
        let mut buf = Vec::new();
        write_ledger(&mut buf, rows)?;
        let path = dir.join(ledger_file_name(*id));
        write_file(&path, &buf)?;
        written.push(path);
    }
    for (id, snap) in &output.snapshots {
        let mut text = serde_json::to_string_pretty(snap)?;
        text.push('\n');
        let path = snap_dir.join(format!("{}.json", id.as_str()));
        write_file(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Recomputes per-strategy reports from ledger rows. Each strategy's episode
/// count is its highest episode number.
pub fn reports_from_ledgers(rows: &[AttemptLedgerRow], window: u64) -> Result<BTreeMap<StrategyId, StrategyReport>> {
    let mut by_strategy: BTreeMap<StrategyId, Vec<AttemptLedgerRow>> = BTreeMap::new();
    for r in rows {
        by_strategy.entry(r.strategy).or_default().push(r.clone());
    }
    by_strategy
        .into_iter()
        .map(|(id, rs)| {
            let episodes = rs.iter().map(|r| r.episode).max().unwrap_or(0);
            Ok((id, strategy_report(id, episodes, window, &rs)?))
        })
        .collect()
}

/// One line per strategy and workflow, plus an `all` line per strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: StrategyId,
    pub workflow: String,
    #[serde(flatten)]
    pub metrics: WastageMetrics,
}

pub const ALL_WORKFLOWS: &str = "all";

pub fn comparison_rows(reports: &BTreeMap<StrategyId, StrategyReport>) -> Vec<ComparisonRow> {
    let mut out = Vec::new();
    for (id, rep) in reports {
        for (wf, m) in &rep.workflows {
            out.push(ComparisonRow {
                strategy: *id,
                workflow: wf.clone(),
                metrics: m.clone(),
            });
        }
        out.push(ComparisonRow {
            strategy: *id,
            workflow: ALL_WORKFLOWS.to_string(),
            metrics: rep.overall.clone(),
        });
    }
    out
}

pub fn write_comparison_csv<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "strategy",
        "workflow",
        "allocated_cpu_hours",
        "used_cpu_hours",
        "cpu_wastage_hours",
        "allocated_mem_gbh",
        "used_mem_gbh",
        "mem_wastage_gbh",
        "failure_count",
        "attempt_count",
        "episode_count",
    ])?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.strategy.as_str().to_string(),
            r.workflow.clone(),
            m.allocated_cpu_hours.to_string(),
            m.used_cpu_hours.to_string(),
            m.cpu_wastage_hours.to_string(),
            m.allocated_mem_gbh.to_string(),
            m.used_mem_gbh.to_string(),
            m.mem_wastage_gbh.to_string(),
            m.failure_count.to_string(),
            m.attempt_count.to_string(),
            m.episode_count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<comparison writer>", e))?;
    Ok(())
}
