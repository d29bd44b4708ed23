use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, Algorithm, EvalReport, HarnessError};
use crate::env::TaskId;

/// Mean success rate (in [0, 1]) of one algorithm on one task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub task_id: TaskId,
    pub algorithm: Algorithm,
    pub success: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResultsTable {
    pub markdown: String,
    pub csv: String,
}

/// Success rates as percentages with one decimal: one column per task, one
/// row per algorithm present, `-` where a pair was not run. Duplicate cells
/// are averaged.
pub fn emit_results_table(cells: &[TableCell]) -> ResultsTable {
    let mut acc: BTreeMap<(Algorithm, TaskId), (f64, usize)> = BTreeMap::new();
    for c in cells {
        let e = acc.entry((c.algorithm, c.task_id)).or_default();
        e.0 += c.success;
        e.1 += 1;
    }
    let algos: Vec<Algorithm> = Algorithm::ALL
        .into_iter()
        .filter(|a| acc.keys().any(|(b, _)| b == a))
        .collect();
    let value = |a: Algorithm, t: TaskId| -> String {
        match acc.get(&(a, t)) {
            Some((sum, n)) => format!("{:.1}", 100.0 * sum / *n as f64),
            None => "-".into(),
        }
    };
    let mut md = String::from("| Algorithm |");
    let mut csv = String::from("algorithm");
    for t in TaskId::ALL {
        write!(md, " {} |", t.short_label()).unwrap();
        write!(csv, ",{}", t.short_label()).unwrap();
    }
    md.push_str("\n|---|");
    md.push_str(&"---:|".repeat(TaskId::ALL.len()));
    md.push('\n');
    csv.push('\n');
    for a in algos {
        write!(md, "| {} |", a.label()).unwrap();
        csv.push_str(a.label());
        for t in TaskId::ALL {
            let v = value(a, t);
            write!(md, " {v} |").unwrap();
            write!(csv, ",{v}").unwrap();
        }
        md.push('\n');
        csv.push('\n');
    }
    ResultsTable { markdown: md, csv }
}

/// Min-max scales a return series into [0, 1]; a constant series maps to 0.
pub fn normalize_curve(returns: &[f64]) -> Vec<f64> {
    let lo = returns.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    returns
        .iter()
        .map(|r| if hi > lo { ((r - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

/// Finds every `eval_report.json` below `dir` and turns reports that name
/// their algorithm into table cells.
pub fn collect_reports(dir: &Path) -> Result<Vec<TableCell>, HarnessError> {
    let mut cells = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut entries: Vec<_> = std::fs::read_dir(&d)
            .map_err(|e| io_err(&d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == "eval_report.json") {
                let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
                let rep: EvalReport =
                    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
                if let Some(algorithm) = rep.algorithm {
                    cells.push(TableCell {
                        task_id: rep.task_id,
                        algorithm,
                        success: rep.mean,
                    });
                }
            }
        }
    }
    Ok(cells)
}
