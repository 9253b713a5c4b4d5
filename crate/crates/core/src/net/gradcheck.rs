//! Finite-difference verification of the analytic gradients.

use ndarray::Array2;
use rayon::prelude::*;

use super::backward::model_backward;
use super::forward::{model_forward, model_predict, mse_loss};
use super::params::{init_params, Activation, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::rng::{splitmix64, Rng};

/// Pre-activations closer than this to zero trigger a resample.
pub const RELU_MARGIN: f64 = 1e-4;
/// Scale of the target offsets from the initial predictions. Small residuals
/// keep the loss small, so rounding noise in the central difference stays
/// well below the smallest gradients being compared.
pub const TARGET_OFFSET: f64 = 1e-2;
const MAX_ATTEMPTS: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: (&'static str, usize),
    /// Analytic and numeric values at the worst entry.
    pub worst_values: (f64, f64),
    pub n_checked: usize,
    /// Seed actually used after skipping points too close to a ReLU kink.
    pub seed_used: u64,
}

/// Small configuration used by the verification harness.
pub fn small_config(seed: u64) -> ModelConfig {
    ModelConfig {
        input_dim: 5,
        dense_units: 8,
        lstm_units: 8,
        output_dim: crate::corpus::CONTOUR_DIM,
        dense_activation: Activation::Relu,
        seed,
    }
}

/// A randomly drawn problem instance: parameters, inputs and targets.
pub struct GradCheckProblem {
    pub params: ModelParams,
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
    pub seed: u64,
}

/// Draws parameters, Gaussian inputs and targets near the initial output
/// from `cfg.seed`, resampling until no ReLU
/// pre-activation lies within [`RELU_MARGIN`] of zero.
pub fn sample_problem(cfg: &ModelConfig, t_len: usize) -> Result<GradCheckProblem> {
    for attempt in 0..MAX_ATTEMPTS {
        let seed = if attempt == 0 {
            cfg.seed
        } else {
            splitmix64(cfg.seed.wrapping_add(attempt))
        };
        let params = init_params(&ModelConfig { seed, ..cfg.clone() })?;
        let mut rng = Rng::stream(seed, 1);
        let features = Array2::from_shape_simple_fn((t_len, cfg.input_dim), || rng.gaussian());
        let (y, cache) = model_forward(&params, &features)?;
        let targets = y.mapv(|v| v + TARGET_OFFSET * rng.gaussian());
        let near_kink = cfg.dense_activation == Activation::Relu
            && cache
                .dense1
                .pre
                .iter()
                .chain(cache.dense2.pre.iter())
                .any(|v| v.abs() < RELU_MARGIN);
        if !near_kink {
            return Ok(GradCheckProblem {
                params,
                features,
                targets,
                seed,
            });
        }
    }
    Err(Error::contract("no parameter sample avoided the ReLU kinks"))
}

/// Compares every analytic gradient entry with the central difference
/// `(L(θ+ε) − L(θ−ε)) / 2ε`, reporting the largest
/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn grad_check(cfg: &ModelConfig, t_len: usize, epsilon: f64) -> Result<GradCheckReport> {
    let problem = sample_problem(cfg, t_len)?;
    let GradCheckProblem {
        params,
        features,
        targets,
        seed,
    } = problem;
    let (_, cache) = model_forward(&params, &features)?;
    let analytic = model_backward(&params, &cache, &targets)?;

    let names: Vec<&'static str> = params.named_slices().into_iter().map(|(n, _)| n).collect();
    let entries: Vec<(usize, usize)> = analytic
        .slices()
        .iter()
        .enumerate()
        .flat_map(|(t, s)| (0..s.len()).map(move |k| (t, k)))
        .collect();
    let analytic_flat = analytic.slices();

    let loss_at = |p: &ModelParams| -> Result<f64> {
        mse_loss(&model_predict(p, &features)?, &targets)
    };

    let worst = entries
        .par_chunks(512)
        .map(|chunk| -> Result<(f64, usize, usize, f64, f64)> {
            let mut p = params.clone();
            let mut worst = (0.0, 0, 0, 0.0, 0.0);
            for &(t, k) in chunk {
                let orig = p.slices()[t][k];
                p.slices_mut()[t][k] = orig + epsilon;
                let plus = loss_at(&p)?;
                p.slices_mut()[t][k] = orig - epsilon;
                let minus = loss_at(&p)?;
                p.slices_mut()[t][k] = orig;
                let numeric = (plus - minus) / (2.0 * epsilon);
                let a = analytic_flat[t][k];
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
                if rel > worst.0 {
                    worst = (rel, t, k, a, numeric);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((0.0, 0, 0, 0.0, 0.0), |acc, w| if w.0 > acc.0 { w } else { acc });

    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst: (names[worst.1], worst.2),
        worst_values: (worst.3, worst.4),
        n_checked: entries.len(),
        seed_used: seed,
    })
}
