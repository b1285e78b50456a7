//! Run artifacts: per-round CSV, final JSON report and arm comparison.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricSummary, MetricsReport};

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub const CSV_HEADER: &str = "scenario,arm,round,client_id,epsilon,sigma,loss,accuracy,precision,recall,f1";

/// One line of `rounds.csv`. `client_id` is a client number, `server` for
/// the weighted aggregate, or `eval:<group>` for held-out evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub scenario: String,
    pub arm: String,
    pub round: u64,
    pub client_id: String,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn render_csv(rows: &[CsvRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::with_capacity(64 * (rows.len() + 1)));
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.arm.clone(),
            r.round.to_string(),
            r.client_id.clone(),
            cell(r.epsilon),
            cell(r.sigma),
            cell(r.loss),
            cell(r.accuracy),
            cell(r.precision),
            cell(r.recall),
            cell(r.f1),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    /// Evaluation subset, e.g. `all`, a modality or a disease.
    pub group: String,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: String,
    /// Position of the arm within its scenario; used for sorting.
    pub order: usize,
    pub learner: String,
    pub epsilon: Option<f64>,
    /// Noise multiplier of each client.
    pub sigma: Vec<f64>,
    pub clients: usize,
    pub checkpoint_checksum: String,
    pub groups: Vec<GroupReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub scenario: String,
    pub seed: u64,
    pub rounds: u64,
    pub arms: Vec<ArmReport>,
}

impl FinalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<FinalReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn arm(&self, name: &str) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.arm == name)
    }
}

/// Summary table with one row per (scenario, arm, group), sorted by
/// scenario, arm order, arm name and group.
pub fn compare_arms(reports: &[FinalReport]) -> String {
    let mut rows: Vec<(&str, usize, &str, &str, [&MetricSummary; 4])> = Vec::new();
    for r in reports {
        for a in &r.arms {
            for g in &a.groups {
                let m = &g.metrics;
                rows.push((&r.scenario, a.order, &a.arm, &g.group, [&m.accuracy, &m.precision, &m.recall, &m.f1]));
            }
        }
    }
    rows.sort_by(|x, y| (x.0, x.1, x.2, x.3).cmp(&(y.0, y.1, y.2, y.3)));
    let mut table: Vec<Vec<String>> = vec![["scenario", "arm", "group", "accuracy", "precision", "recall", "f1"]
        .map(String::from)
        .to_vec()];
    for (scenario, _, arm, group, ms) in rows {
        let mut line = vec![scenario.to_string(), arm.to_string(), group.to_string()];
        line.extend(ms.iter().map(|m| m.display()));
        table.push(line);
    }
    let widths: Vec<usize> = (0..7)
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
