//! Report helpers: design evaluation, JSON output and the compact
//! objective / gap % / time summary used to compare methods across runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::choice::{log_gm_from_utilities, logistic, share_from_utilities, utilities};
use crate::error::{Error, Result};
use crate::gm::GmReport;
use crate::instance::{DesignVector, Instance, ObjectiveKind};
use crate::oa::SolveReport;

/// Everything a single design scores on an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEvaluation {
    pub design: DesignVector,
    pub feasible: bool,
    /// Indices of violated side constraints.
    pub violated_constraints: Vec<usize>,
    pub share_of_choice: f64,
    pub geometric_mean: f64,
    pub log_geometric_mean: f64,
    pub expected_profit: Option<f64>,
    pub utilities: Vec<f64>,
    pub probabilities: Vec<f64>,
}

pub fn evaluate_design(instance: &Instance, design: &DesignVector) -> Result<DesignEvaluation> {
    if design.len() != instance.n {
        return Err(Error::Dimension {
            what: "design",
            expected: instance.n,
            got: design.len(),
        });
    }
    let a = design.bits();
    let u = utilities(instance, a);
    let violated: Vec<usize> = instance
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_satisfied(a))
        .map(|(j, _)| j)
        .collect();
    let share = share_from_utilities(&instance.lambda, &u);
    let log_gm = log_gm_from_utilities(&instance.lambda, &u);
    let profit = match instance.objective.kind {
        ObjectiveKind::ExpectedProfit => instance.objective.margin(a).map(|m| m * share),
        ObjectiveKind::ShareOfChoice => None,
    };
    Ok(DesignEvaluation {
        design: design.clone(),
        feasible: violated.is_empty(),
        violated_constraints: violated,
        share_of_choice: share,
        geometric_mean: log_gm.exp(),
        log_geometric_mean: log_gm,
        expected_profit: profit,
        probabilities: u.iter().map(|&v| logistic(v)).collect(),
        utilities: u,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    // Reports hold only plain data; serialisation cannot fail.
    serde_json::to_string_pretty(value).expect("report serialises") + "\n"
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json(value)).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// One line of a method comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub method: String,
    pub objective: Option<f64>,
    pub gap_percent: Option<f64>,
    pub time_secs: f64,
    pub nodes: u64,
    pub termination: String,
}

impl SummaryRow {
    pub fn from_solve(label: impl Into<String>, r: &SolveReport) -> Self {
        SummaryRow {
            label: label.into(),
            method: r.method.clone(),
            objective: r.objective_value,
            gap_percent: r.gap_percent,
            time_secs: r.wall_time_secs,
            nodes: r.nodes,
            termination: r.termination.as_str().into(),
        }
    }

    /// The objective column carries the AM value of the GM design so rows
    /// compare directly with exact solves.
    pub fn from_gm(label: impl Into<String>, r: &GmReport) -> Self {
        SummaryRow {
            label: label.into(),
            method: r.method.clone(),
            objective: r.am_value_of_design,
            gap_percent: r.gap.map(|g| 100.0 * g),
            time_secs: r.wall_time_secs,
            nodes: r.nodes,
            termination: r.termination.as_str().into(),
        }
    }
}

/// Fixed-width text table of `rows`.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let opt = |v: Option<f64>, prec: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"));
    let mut s = format!(
        "{:<24} {:<8} {:>12} {:>9} {:>10} {:>9}  {}\n",
        "instance", "method", "objective", "gap %", "time (s)", "nodes", "status"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<24} {:<8} {:>12} {:>9} {:>10.2} {:>9}  {}",
            r.label,
            r.method,
            opt(r.objective, 6),
            opt(r.gap_percent, 2),
            r.time_secs,
            r.nodes,
            r.termination
        );
    }
    s
}
