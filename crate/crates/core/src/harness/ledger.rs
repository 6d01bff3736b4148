//! Analytic per-block cost accounting.
//!
//! Training a network with `|θ|` parameters on `B` symbols costs
//! `α_T·|θ|·B` units; running inference costs `α_I·|θ|·B`. A hypernetwork
//! pass costs `α_I·|φ|`, and the least-squares channel estimate `c_LS·N·B_pilot`
//! per user.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub alpha_t: f64,
    pub alpha_i: f64,
    pub c_ls: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            alpha_t: 100.0,
            alpha_i: 1.0,
            c_ls: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexityLedger {
    pub weights: CostWeights,
    pub training: f64,
    pub inference: f64,
    pub hyper: f64,
    pub estimation: f64,
}

impl ComplexityLedger {
    pub fn new(weights: CostWeights) -> Self {
        Self {
            weights,
            ..Self::default()
        }
    }

    /// Retraining `k` modules of `module_size` parameters on `pilot_len` symbols.
    pub fn record_training(&mut self, module_size: usize, pilot_len: usize, k: usize) {
        self.training += self.weights.alpha_t * (module_size * pilot_len * k) as f64;
    }

    /// Detecting `info_len` symbols with `k` modules.
    pub fn record_inference(&mut self, module_size: usize, info_len: usize, k: usize) {
        self.inference += self.weights.alpha_i * (module_size * info_len * k) as f64;
    }

    /// `k` hypernetwork passes.
    pub fn record_hyper(&mut self, hyper_size: usize, k: usize) {
        self.hyper += self.weights.alpha_i * (hyper_size * k) as f64;
    }

    /// Least-squares estimate of `k` channel signatures from `pilot_len` pilots.
    pub fn record_ls(&mut self, n: usize, pilot_len: usize, k: usize) {
        self.estimation += self.weights.c_ls * (n * pilot_len * k) as f64;
    }

    pub fn merge(&mut self, other: &ComplexityLedger) {
        self.training += other.training;
        self.inference += other.inference;
        self.hyper += other.hyper;
        self.estimation += other.estimation;
    }

    /// Everything except training.
    pub fn online_non_training(&self) -> f64 {
        self.inference + self.hyper + self.estimation
    }

    pub fn total(&self) -> f64 {
        self.training + self.online_non_training()
    }
}

/// Total hypernetwork-run cost over total online-learning cost.
pub fn complexity_ratio(hyper: &ComplexityLedger, online: &ComplexityLedger) -> Result<f64> {
    let denom = online.total();
    if denom <= 0.0 {
        return Err(Error::Invalid(
            "online ledger is empty; ratio undefined".into(),
        ));
    }
    Ok(hyper.total() / denom)
}

/// Inputs to the closed-form per-block complexity ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioInputs {
    pub weights: CostWeights,
    /// `|θ|`, parameters per receiver module.
    pub module_size: usize,
    /// `|φ|`, hypernetwork parameters.
    pub hyper_size: usize,
    pub pilot_len: usize,
    pub info_len: usize,
    pub n: usize,
}

/// `[α_I(|θ|B_info + |φ|) + c_LS·N·B_pilot] / [(α_T·B_pilot + α_I·B_info)|θ|]`.
pub fn closed_form_ratio(p: &RatioInputs) -> f64 {
    let w = p.weights;
    let theta = p.module_size as f64;
    let num = w.alpha_i * (theta * p.info_len as f64 + p.hyper_size as f64)
        + w.c_ls * (p.n * p.pilot_len) as f64;
    let den = (w.alpha_t * p.pilot_len as f64 + w.alpha_i * p.info_len as f64) * theta;
    num / den
}

/// Approximation valid when training dominates detection and LS is negligible:
/// `(α_I·B_info)/(α_T·B_pilot) · (1 + |φ|/(|θ|·B_info))`.
pub fn approximate_ratio(p: &RatioInputs) -> f64 {
    let w = p.weights;
    let b_info = p.info_len as f64;
    (w.alpha_i * b_info) / (w.alpha_t * p.pilot_len as f64)
        * (1.0 + p.hyper_size as f64 / (p.module_size as f64 * b_info))
}
