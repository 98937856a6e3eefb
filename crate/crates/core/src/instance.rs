//! Problem instances: customer types with logit partworths, the feasible
//! design set `{a in {0,1}^n : C a <= d}`, and the objective to maximize.
//!
//! Instances are stored on disk as a JSON document:
//!
//! ```text
//! {
//!   "n": 2, "K": 1,
//!   "lambda": [1.0], "beta0": [0.0], "beta": [[1.0, -2.0]],
//!   "constraints": [{"coeffs": [{"index": 0, "value": 1.0}, {"index": 1, "value": 1.0}], "rhs": 1.0}],
//!   "objective": {"kind": "share_of_choice"}
//! }
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Slack allowed on `coeffs . a <= rhs` when testing feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Allowed deviation of `sum(lambda)` from one.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub index: usize,
    pub value: f64,
}

/// One row of `C a <= d`, stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<Coefficient>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) -> Self {
        LinearConstraint {
            coeffs: coeffs
                .into_iter()
                .map(|(index, value)| Coefficient { index, value })
                .collect(),
            rhs,
        }
    }

    pub fn activity(&self, a: &[bool]) -> f64 {
        self.coeffs
            .iter()
            .filter(|c| a[c.index])
            .map(|c| c.value)
            .sum()
    }

    pub fn is_satisfied(&self, a: &[bool]) -> bool {
        self.activity(a) <= self.rhs + FEASIBILITY_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    ShareOfChoice,
    ExpectedProfit,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveKind::ShareOfChoice => f.write_str("share_of_choice"),
            ObjectiveKind::ExpectedProfit => f.write_str("expected_profit"),
        }
    }
}

/// Which objective an instance asks for. For expected profit the margin of a
/// design is `R(a) = r0 + sum_i r_i a_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
}

impl ObjectiveSpec {
    pub fn share_of_choice() -> Self {
        ObjectiveSpec {
            kind: ObjectiveKind::ShareOfChoice,
            r0: None,
            r: None,
        }
    }

    pub fn expected_profit(r0: f64, r: Vec<f64>) -> Self {
        ObjectiveSpec {
            kind: ObjectiveKind::ExpectedProfit,
            r0: Some(r0),
            r: Some(r),
        }
    }

    /// Margin `R(a)`; `None` for share-of-choice objectives.
    pub fn margin(&self, a: &[bool]) -> Option<f64> {
        match (self.kind, self.r0, self.r.as_ref()) {
            (ObjectiveKind::ExpectedProfit, Some(r0), Some(r)) => Some(
                r0 + r
                    .iter()
                    .zip(a)
                    .filter(|(_, &on)| on)
                    .map(|(ri, _)| ri)
                    .sum::<f64>(),
            ),
            _ => None,
        }
    }
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec::share_of_choice()
    }
}

/// A binary attribute assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DesignVector(Vec<bool>);

impl DesignVector {
    pub fn new(bits: Vec<bool>) -> Self {
        DesignVector(bits)
    }

    pub fn zeros(n: usize) -> Self {
        DesignVector(vec![false; n])
    }

    /// Builds a design from 0/1 values; anything else is an argument error.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        values
            .iter()
            .map(|&v| {
                if v == 0.0 {
                    Ok(false)
                } else if v == 1.0 {
                    Ok(true)
                } else {
                    Err(Error::Argument(format!("design entry {v} is not binary")))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(DesignVector)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.0
    }
}

impl fmt::Display for DesignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for DesignVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter().map(|&b| u8::from(b)))
    }
}

impl<'de> Deserialize<'de> for DesignVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<u8>::deserialize(deserializer)?;
        raw.into_iter()
            .map(|v| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(serde::de::Error::custom(format!(
                    "design entry {other} is not binary"
                ))),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(DesignVector)
    }
}

/// A violated invariant, located by a field path such as `beta[2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationResult {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Invalid(
                self.issues.iter().map(ToString::to_string).collect(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub n: usize,
    #[serde(rename = "K")]
    pub num_types: usize,
    pub lambda: Vec<f64>,
    pub beta0: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    #[serde(default)]
    pub constraints: Vec<LinearConstraint>,
    #[serde(default)]
    pub objective: ObjectiveSpec,
}

impl Instance {
    /// Share-of-choice instance without side constraints.
    pub fn new(lambda: Vec<f64>, beta0: Vec<f64>, beta: Vec<Vec<f64>>) -> Self {
        let n = beta.first().map_or(0, Vec::len);
        Instance {
            n,
            num_types: lambda.len(),
            lambda,
            beta0,
            beta,
            constraints: Vec::new(),
            objective: ObjectiveSpec::share_of_choice(),
        }
    }

    pub fn with_constraints(mut self, constraints: Vec<LinearConstraint>) -> Self {
        self.constraints = constraints;
        self
    }

    pub fn with_objective(mut self, objective: ObjectiveSpec) -> Self {
        self.objective = objective;
        self
    }

    pub fn validate(&self) -> ValidationResult {
        let mut out = ValidationResult::default();
        let (n, k) = (self.n, self.num_types);
        if n < 1 {
            out.push("n", "must be at least 1");
        }
        if k < 1 {
            out.push("K", "must be at least 1");
        }
        if self.lambda.len() != k {
            out.push(
                "lambda",
                format!("dimension mismatch: {} weights for K = {k}", self.lambda.len()),
            );
        }
        for (i, &l) in self.lambda.iter().enumerate() {
            if !l.is_finite() || l < 0.0 {
                out.push(format!("lambda[{i}]"), format!("weight {l} is not a finite nonnegative number"));
            }
        }
        let total: f64 = self.lambda.iter().sum();
        if !self.lambda.is_empty() && (total - 1.0).abs() > WEIGHT_SUM_TOL {
            out.push("lambda", format!("weights sum ≠ 1 (sum = {total})"));
        }
        if self.beta0.len() != k {
            out.push(
                "beta0",
                format!("dimension mismatch: {} intercepts for K = {k}", self.beta0.len()),
            );
        }
        for (i, b) in self.beta0.iter().enumerate() {
            if !b.is_finite() {
                out.push(format!("beta0[{i}]"), "not finite");
            }
        }
        if self.beta.len() != k {
            out.push(
                "beta",
                format!("dimension mismatch: {} rows for K = {k}", self.beta.len()),
            );
        }
        for (row, betas) in self.beta.iter().enumerate() {
            if betas.len() != n {
                out.push(
                    format!("beta[{row}]"),
                    format!("dimension mismatch: {} columns for n = {n}", betas.len()),
                );
            }
            if let Some(col) = betas.iter().position(|b| !b.is_finite()) {
                out.push(format!("beta[{row}][{col}]"), "not finite");
            }
        }
        for (row, con) in self.constraints.iter().enumerate() {
            if !con.rhs.is_finite() {
                out.push(format!("constraints[{row}].rhs"), "not finite");
            }
            for (j, c) in con.coeffs.iter().enumerate() {
                if c.index >= n {
                    out.push(
                        format!("constraints[{row}].coeffs[{j}].index"),
                        format!("index {} out of range for n = {n}", c.index),
                    );
                }
                if !c.value.is_finite() {
                    out.push(format!("constraints[{row}].coeffs[{j}].value"), "not finite");
                }
            }
        }
        match self.objective.kind {
            ObjectiveKind::ShareOfChoice => {}
            ObjectiveKind::ExpectedProfit => {
                match self.objective.r0 {
                    Some(r0) if r0.is_finite() => {}
                    Some(_) => out.push("objective.r0", "not finite"),
                    None => out.push("objective.r0", "required for expected_profit"),
                }
                match &self.objective.r {
                    Some(r) if r.len() != n => out.push(
                        "objective.r",
                        format!("dimension mismatch: {} margins for n = {n}", r.len()),
                    ),
                    Some(r) if r.iter().any(|v| !v.is_finite()) => {
                        out.push("objective.r", "not finite")
                    }
                    Some(_) => {}
                    None => out.push("objective.r", "required for expected_profit"),
                }
            }
        }
        out
    }

    /// `true` iff every row of `C a <= d` holds within [`FEASIBILITY_TOL`].
    pub fn is_feasible(&self, a: &DesignVector) -> Result<bool> {
        self.check_len(a)?;
        Ok(self.is_feasible_bits(a.bits()))
    }

    pub(crate) fn is_feasible_bits(&self, a: &[bool]) -> bool {
        self.constraints.iter().all(|c| c.is_satisfied(a))
    }

    pub(crate) fn check_len(&self, a: &DesignVector) -> Result<()> {
        if a.len() != self.n {
            return Err(Error::Dimension {
                what: "design vector length",
                expected: self.n,
                got: a.len(),
            });
        }
        Ok(())
    }

    pub fn objective_kind(&self) -> ObjectiveKind {
        self.objective.kind
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<memory>"))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance serializes");
        s.push('\n');
        s
    }

    /// Reads an instance file. Structural problems surface as
    /// [`Error::Parse`]; invariant violations are left to [`Instance::validate`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

/// Dummy-codes an attribute with `levels` levels starting at column `start`.
///
/// Returns the `levels - 1` indices used and the at-most-one constraint over
/// them; the all-zeros pattern is the baseline level.
pub fn multilevel_attribute(levels: usize, start: usize) -> Result<(Vec<usize>, LinearConstraint)> {
    if levels < 2 {
        return Err(Error::Argument(format!(
            "a multi-level attribute needs at least 2 levels, got {levels}"
        )));
    }
    let indices: Vec<usize> = (start..start + levels - 1).collect();
    let constraint = LinearConstraint::new(indices.iter().map(|&i| (i, 1.0)), 1.0);
    Ok((indices, constraint))
}
