//! Binary-logit choice evaluation: utilities, purchase probabilities, the
//! three design objectives, and the convex constraint function
//! `F(w, x1, x0, u) = -w + x1 log x1 + x0 log x0 + log(1 + e^u)` whose
//! sublevel set `F <= 0` pins `(x1, x0)` to the logit probabilities.

use crate::error::{Error, Result};
use crate::instance::{DesignVector, Instance, ObjectiveKind};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any
/// logarithm appears in a cut or a gradient.
pub const PROB_CLAMP: f64 = 1e-9;

/// Above this utility `softplus` switches to `u + log1p(exp(-u))`.
const SOFTPLUS_SWITCH: f64 = 30.0;

/// `e^u / (1 + e^u)`, evaluated without overflow.
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^u)`.
pub fn softplus(u: f64) -> f64 {
    if u > SOFTPLUS_SWITCH {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `log(logistic(u))`, i.e. `u - softplus(u)`.
pub fn log_logistic(u: f64) -> f64 {
    -softplus(-u)
}

/// `x log x` with `0 log 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

pub fn clamp_probability(x: f64) -> f64 {
    x.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Purchase and no-purchase probabilities per customer type.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceProbabilities {
    pub x1: Vec<f64>,
    pub x0: Vec<f64>,
}

impl ChoiceProbabilities {
    pub fn from_utilities(u: &[f64]) -> Self {
        ChoiceProbabilities {
            x1: u.iter().map(|&v| logistic(v)).collect(),
            x0: u.iter().map(|&v| logistic(-v)).collect(),
        }
    }
}

pub fn utility(instance: &Instance, a: &DesignVector) -> Result<Vec<f64>> {
    instance.check_len(a)?;
    Ok(utilities(instance, a.bits()))
}

pub(crate) fn utilities(instance: &Instance, a: &[bool]) -> Vec<f64> {
    instance
        .beta
        .iter()
        .zip(&instance.beta0)
        .map(|(row, &b0)| {
            b0 + row
                .iter()
                .zip(a)
                .filter(|(_, &on)| on)
                .map(|(b, _)| b)
                .sum::<f64>()
        })
        .collect()
}

pub fn choice_probabilities(instance: &Instance, a: &DesignVector) -> Result<ChoiceProbabilities> {
    Ok(ChoiceProbabilities::from_utilities(&utility(instance, a)?))
}

/// `sum_k lambda_k logistic(u_k(a))`.
pub fn share_of_choice(instance: &Instance, a: &DesignVector) -> Result<f64> {
    instance.check_len(a)?;
    Ok(share_from_utilities(&instance.lambda, &utilities(instance, a.bits())))
}

pub(crate) fn share_from_utilities(lambda: &[f64], u: &[f64]) -> f64 {
    lambda.iter().zip(u).map(|(&l, &v)| l * logistic(v)).sum()
}

/// `R(a) * share_of_choice(a)`; only defined for expected-profit instances.
pub fn expected_profit(instance: &Instance, a: &DesignVector) -> Result<f64> {
    instance.check_len(a)?;
    if instance.objective.kind != ObjectiveKind::ExpectedProfit {
        return Err(Error::Contract(
            "expected_profit called on a share-of-choice instance".into(),
        ));
    }
    let margin = instance
        .objective
        .margin(a.bits())
        .ok_or_else(|| Error::Contract("expected_profit objective is missing r0 or r".into()))?;
    if margin == 0.0 {
        return Ok(0.0);
    }
    Ok(margin * share_from_utilities(&instance.lambda, &utilities(instance, a.bits())))
}

/// `prod_k logistic(u_k(a))^lambda_k`, accumulated in log space.
pub fn geometric_mean_objective(instance: &Instance, a: &DesignVector) -> Result<f64> {
    instance.check_len(a)?;
    Ok(log_gm_from_utilities(&instance.lambda, &utilities(instance, a.bits())).exp())
}

pub(crate) fn log_gm_from_utilities(lambda: &[f64], u: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(u)
        .filter(|(&l, _)| l != 0.0)
        .map(|(&l, &v)| l * log_logistic(v))
        .sum()
}

/// The instance's own objective (share of choice or expected profit).
pub fn objective_value(instance: &Instance, a: &DesignVector) -> Result<f64> {
    match instance.objective.kind {
        ObjectiveKind::ShareOfChoice => share_of_choice(instance, a),
        ObjectiveKind::ExpectedProfit => expected_profit(instance, a),
    }
}

/// Objective functions a design can be scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Arithmetic mean of purchase probabilities.
    ShareOfChoice,
    ExpectedProfit,
    /// Weighted geometric mean of purchase probabilities.
    GeometricMean,
}

impl Criterion {
    pub fn evaluate(self, instance: &Instance, a: &DesignVector) -> Result<f64> {
        match self {
            Criterion::ShareOfChoice => share_of_choice(instance, a),
            Criterion::ExpectedProfit => expected_profit(instance, a),
            Criterion::GeometricMean => geometric_mean_objective(instance, a),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::ShareOfChoice => "share_of_choice",
            Criterion::ExpectedProfit => "expected_profit",
            Criterion::GeometricMean => "geometric_mean",
        }
    }
}

impl From<ObjectiveKind> for Criterion {
    fn from(kind: ObjectiveKind) -> Self {
        match kind {
            ObjectiveKind::ShareOfChoice => Criterion::ShareOfChoice,
            ObjectiveKind::ExpectedProfit => Criterion::ExpectedProfit,
        }
    }
}

/// `F(w, x1, x0, u)`; boundary probabilities use `0 log 0 = 0`.
pub fn f_value(w: f64, x1: f64, x0: f64, u: f64) -> Result<f64> {
    if x1 < 0.0 || x0 < 0.0 {
        return Err(Error::Domain(format!(
            "probabilities must be nonnegative (x1 = {x1}, x0 = {x0})"
        )));
    }
    Ok(-w + xlogx(x1) + xlogx(x0) + softplus(u))
}

/// `grad F = (-1, log x1 + 1, log x0 + 1, logistic(u))`, ordered as
/// `(w, x1, x0, u)`. Requires strictly positive probabilities.
pub fn f_gradient(_w: f64, x1: f64, x0: f64, u: f64) -> Result<[f64; 4]> {
    if x1 <= 0.0 || x0 <= 0.0 {
        return Err(Error::Domain(format!(
            "gradient needs x1, x0 > 0 (x1 = {x1}, x0 = {x0}); clamp first"
        )));
    }
    Ok([-1.0, x1.ln() + 1.0, x0.ln() + 1.0, logistic(u)])
}
