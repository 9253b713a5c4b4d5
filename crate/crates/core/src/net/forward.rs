//! Forward pass with the activations needed for backpropagation through time.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::{Activation, BiLstm, Dense, LstmDir, ModelParams};
use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
pub(crate) struct DenseCache {
    pub input: Array2<f64>,
    pub pre: Array2<f64>,
    pub out: Array2<f64>,
}

/// One LSTM direction, all rows in processing order.
#[derive(Debug, Clone)]
pub(crate) struct LstmDirCache {
    pub input: Array2<f64>,
    /// Activated gates `[i | f | g | o]`, `T × 4H`.
    pub gates: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct BiLstmCache {
    pub fwd: LstmDirCache,
    /// Processed on the time-reversed sequence.
    pub bwd: LstmDirCache,
}

/// Activations of one forward pass, consumed by [`super::model_backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) fingerprint: u64,
    pub(crate) dense1: DenseCache,
    pub(crate) dense2: DenseCache,
    pub(crate) bilstm1: BiLstmCache,
    pub(crate) bilstm2: BiLstmCache,
    pub(crate) bilstm2_out: Array2<f64>,
    pub(crate) output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

fn dense_forward(layer: &Dense, x: Array2<f64>, act: Option<Activation>) -> DenseCache {
    let pre = x.dot(&layer.w) + &layer.b;
    let out = match act {
        Some(a) => pre.mapv(|v| a.apply(v)),
        None => pre.clone(),
    };
    DenseCache { input: x, pre, out }
}

pub(crate) fn lstm_dir_forward(p: &LstmDir, x: Array2<f64>) -> LstmDirCache {
    let t_len = x.nrows();
    let h_dim = p.hidden();
    let pre_in = x.dot(&p.w_ih) + &p.b;
    let mut gates = Array2::zeros((t_len, 4 * h_dim));
    let mut c = Array2::zeros((t_len, h_dim));
    let mut tanh_c = Array2::zeros((t_len, h_dim));
    let mut h = Array2::zeros((t_len, h_dim));
    let mut h_prev = Array1::<f64>::zeros(h_dim);
    let mut c_prev = Array1::<f64>::zeros(h_dim);
    for t in 0..t_len {
        let a = &pre_in.row(t) + &h_prev.dot(&p.w_hh);
        let mut g_row = gates.row_mut(t);
        for k in 0..h_dim {
            let i = sigmoid(a[k]);
            let f = sigmoid(a[h_dim + k]);
            let g = a[2 * h_dim + k].tanh();
            let o = sigmoid(a[3 * h_dim + k]);
            let ct = f * c_prev[k] + i * g;
            let tc = ct.tanh();
            g_row[k] = i;
            g_row[h_dim + k] = f;
            g_row[2 * h_dim + k] = g;
            g_row[3 * h_dim + k] = o;
            c[[t, k]] = ct;
            tanh_c[[t, k]] = tc;
            h[[t, k]] = o * tc;
        }
        h_prev.assign(&h.row(t));
        c_prev.assign(&c.row(t));
    }
    LstmDirCache {
        input: x,
        gates,
        c,
        tanh_c,
        h,
    }
}

pub(crate) fn reversed(x: ArrayView2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

fn bilstm_forward(layer: &BiLstm, x: &Array2<f64>) -> (BiLstmCache, Array2<f64>) {
    let fwd = lstm_dir_forward(&layer.fwd, x.clone());
    let bwd = lstm_dir_forward(&layer.bwd, reversed(x.view()));
    let out = ndarray::concatenate(Axis(1), &[fwd.h.view(), reversed(bwd.h.view()).view()])
        .expect("equal row counts");
    (BiLstmCache { fwd, bwd }, out)
}

/// Runs the network on a `T × D` feature matrix, returning `T × output_dim`
/// predictions and the activation cache.
pub fn model_forward(
    params: &ModelParams,
    features: &Array2<f64>,
) -> Result<(Array2<f64>, ForwardCache)> {
    let (output, mut cache) = forward_impl(params, features)?;
    cache.fingerprint = params.fingerprint();
    Ok((output, cache))
}

fn forward_impl(params: &ModelParams, features: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
    let activation = params.activation;
    let expected = params.dense1.w.nrows();
    if features.ncols() != expected {
        return Err(Error::contract(format!(
            "model expects {expected} input features, got {}",
            features.ncols()
        )));
    }
    let dense1 = dense_forward(&params.dense1, features.clone(), Some(activation));
    let dense2 = dense_forward(&params.dense2, dense1.out.clone(), Some(activation));
    let (bilstm1, bilstm1_out) = bilstm_forward(&params.bilstm1, &dense2.out);
    let (bilstm2, bilstm2_out) = bilstm_forward(&params.bilstm2, &bilstm1_out);
    let output = bilstm2_out.dot(&params.out.w) + &params.out.b;
    let cache = ForwardCache {
        fingerprint: 0,
        dense1,
        dense2,
        bilstm1,
        bilstm2,
        bilstm2_out,
        output: output.clone(),
    };
    Ok((output, cache))
}

/// Forward pass without keeping the cache.
pub fn model_predict(params: &ModelParams, features: &Array2<f64>) -> Result<Array2<f64>> {
    forward_impl(params, features).map(|(y, _)| y)
}

/// Mean of squared differences over every entry.
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::contract(format!(
            "prediction {:?} and target {:?} shapes differ",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::contract("mse of empty matrices"));
    }
    Ok(sum_squared_error(pred, target) / pred.len() as f64)
}

pub(crate) fn sum_squared_error(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    pred.iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum()
}
