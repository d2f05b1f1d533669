//! Probabilistic view of the label step: a smooth relaxation of the minimum
//! over labels, a Bernoulli prior, the resulting posterior and its
//! zero-temperature limit.
//!
//! These formulas use the convention in which `y = 1` selects the `L_a`
//! term through the prior weight `alpha`; the posterior keeps `alpha` next to
//! the normal term. Everything is evaluated in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationParams {
    pub beta: f64,
    pub alpha: f64,
    pub c_alpha: f64,
}

impl RelaxationParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {alpha}")));
        }
        if !(beta >= 0.0) {
            return Err(Error::Config(format!("beta must be non-negative, got {beta}")));
        }
        Ok(Self {
            beta,
            alpha,
            c_alpha: log_odds(alpha),
        })
    }
}

/// `C_alpha = log(alpha) - log(1 - alpha)`.
pub fn log_odds(alpha: f64) -> f64 {
    alpha.ln() - (1.0 - alpha).ln()
}

/// `log(e^a + e^b)` with the larger exponent factored out.
fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `beta^-1 log(exp(-beta L_n) + exp(-beta L_a))`.
pub fn smooth_neg_min(normal: f64, anomaly: f64, beta: f64) -> f64 {
    assert!(beta > 0.0, "beta must be positive");
    let lo = normal.min(anomaly);
    let hi = normal.max(anomaly);
    // Shifted by the dominant term -beta*lo; the remainder lies in (0, log 2].
    -lo + (-(beta * (hi - lo))).exp().ln_1p() / beta
}

/// Log of the unnormalized joint:
/// `y (log alpha - beta L_a) + (1 - y)(log(1 - alpha) - beta L_n)`.
pub fn unnormalized_joint(normal: f64, anomaly: f64, y: u8, alpha: f64, beta: f64) -> f64 {
    if y == 1 {
        alpha.ln() - beta * anomaly
    } else {
        (1.0 - alpha).ln() - beta * normal
    }
}

/// The two log-numerators of the posterior: `(normal, anomaly)` with
/// `-beta L_n + log alpha` and `-beta L_a + log(1 - alpha)`.
fn posterior_logits(normal: f64, anomaly: f64, alpha: f64, beta: f64) -> (f64, f64) {
    (-beta * normal + alpha.ln(), -beta * anomaly + (1.0 - alpha).ln())
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `p(y = 0 | x) = e^{u} / (e^{u} + e^{v})`, `u = -beta L_n + log alpha`,
/// `v = -beta L_a + log(1 - alpha)`, as a sigmoid of `u - v`.
pub fn posterior_normal(normal: f64, anomaly: f64, alpha: f64, beta: f64) -> f64 {
    let (u, v) = posterior_logits(normal, anomaly, alpha, beta);
    sigmoid(u - v)
}

/// Complement of [`posterior_normal`], computed from its own logit.
pub fn posterior_anomaly(normal: f64, anomaly: f64, alpha: f64, beta: f64) -> f64 {
    let (u, v) = posterior_logits(normal, anomaly, alpha, beta);
    sigmoid(v - u)
}

/// Log of the posterior's normalizer, `log(e^u + e^v)`.
pub fn log_evidence(normal: f64, anomaly: f64, alpha: f64, beta: f64) -> f64 {
    let (u, v) = posterior_logits(normal, anomaly, alpha, beta);
    log_add_exp(u, v)
}

/// `0` when `L_n < L_a + c`, otherwise `1` (ties go to `1`).
pub fn hard_classifier(normal: f64, anomaly: f64, c: f64) -> u8 {
    if normal < anomaly + c {
        0
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmStep {
    /// Expected joint loss under the current posterior.
    pub q: f64,
    /// `p(y_i = 0 | x_i)` per sample.
    pub posterior: Vec<f64>,
}

/// `Q = sum_i p_i L_n(x_i) + (1 - p_i) L_a(x_i)` with `p_i` the posterior
/// probability of being normal.
pub fn expected_joint(normal: &[f64], anomaly: &[f64], posterior: &[f64]) -> f64 {
    normal
        .iter()
        .zip(anomaly)
        .zip(posterior)
        .map(|((n, a), p)| p * n + (1.0 - p) * a)
        .sum()
}

/// Alternates the E-step and the evaluation of `Q` on frozen losses for
/// `steps` rounds.
pub fn em_iterate(normal: &[f64], anomaly: &[f64], alpha: f64, beta: f64, steps: usize) -> Vec<EmStep> {
    assert_eq!(normal.len(), anomaly.len(), "loss vectors differ in length");
    (0..steps)
        .map(|_| {
            let posterior: Vec<f64> = normal
                .iter()
                .zip(anomaly)
                .map(|(&n, &a)| posterior_normal(n, a, alpha, beta))
                .collect();
            EmStep {
                q: expected_joint(normal, anomaly, &posterior),
                posterior,
            }
        })
        .collect()
}
