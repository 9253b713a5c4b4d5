//! Reverse-mode gradients of the MSE loss through the whole network.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::forward::{reversed, BiLstmCache, DenseCache, ForwardCache, LstmDirCache};
use super::params::{Activation, BiLstm, Dense, LstmDir, ModelParams};
use crate::error::{Error, Result};

/// Gradient of `mse_loss(forward(features), target)` with respect to every
/// parameter.
pub fn model_backward(
    params: &ModelParams,
    cache: &ForwardCache,
    target: &Array2<f64>,
) -> Result<ModelParams> {
    let n = cache.output.len();
    if n == 0 {
        return Err(Error::contract("cannot differentiate an empty sequence"));
    }
    backward_scaled(params, cache, target, 1.0 / n as f64)
}

/// Gradient of `scale · Σ (y − target)²`. Training uses
/// `scale = 1 / (batch entries)` so per-sequence gradients sum to the
/// gradient of the batch-mean loss.
pub(crate) fn backward_scaled(
    params: &ModelParams,
    cache: &ForwardCache,
    target: &Array2<f64>,
    scale: f64,
) -> Result<ModelParams> {
    if cache.fingerprint != params.fingerprint() {
        return Err(Error::contract(
            "forward cache was produced with different parameters",
        ));
    }
    if cache.output.dim() != target.dim() {
        return Err(Error::contract(format!(
            "target shape {:?} does not match output {:?}",
            target.dim(),
            cache.output.dim()
        )));
    }
    let mut grads = params.zeros_like();

    let d_out = (&cache.output - target) * (2.0 * scale);
    grads.out.w = cache.bilstm2_out.t().dot(&d_out);
    grads.out.b = d_out.sum_axis(Axis(0));
    let d_b2 = d_out.dot(&params.out.w.t());

    let d_b1 = bilstm_backward(&params.bilstm2, &cache.bilstm2, &d_b2, &mut grads.bilstm2);
    let d_h2 = bilstm_backward(&params.bilstm1, &cache.bilstm1, &d_b1, &mut grads.bilstm1);

    let act = params.activation;
    let d_h1 = dense_backward(&params.dense2, &cache.dense2, d_h2, act, &mut grads.dense2);
    dense_backward(&params.dense1, &cache.dense1, d_h1, act, &mut grads.dense1);
    Ok(grads)
}

fn dense_backward(
    layer: &Dense,
    cache: &DenseCache,
    d_out: Array2<f64>,
    act: Activation,
    grads: &mut Dense,
) -> Array2<f64> {
    let mut d_pre = d_out;
    ndarray::Zip::from(&mut d_pre)
        .and(&cache.pre)
        .and(&cache.out)
        .for_each(|d, &x, &y| *d *= act.derivative(x, y));
    grads.w = cache.input.t().dot(&d_pre);
    grads.b = d_pre.sum_axis(Axis(0));
    d_pre.dot(&layer.w.t())
}

fn bilstm_backward(
    layer: &BiLstm,
    cache: &BiLstmCache,
    d_out: &Array2<f64>,
    grads: &mut BiLstm,
) -> Array2<f64> {
    let h = layer.fwd.hidden();
    let d_fwd = d_out.slice(s![.., ..h]).to_owned();
    let d_bwd = reversed(d_out.slice(s![.., h..]));
    let dx_fwd = lstm_dir_backward(&layer.fwd, &cache.fwd, d_fwd.view(), &mut grads.fwd);
    let dx_bwd = lstm_dir_backward(&layer.bwd, &cache.bwd, d_bwd.view(), &mut grads.bwd);
    dx_fwd + reversed(dx_bwd.view())
}

/// BPTT for one direction; `d_h` and the returned input gradient are in the
/// direction's processing order.
pub(crate) fn lstm_dir_backward(
    p: &LstmDir,
    cache: &LstmDirCache,
    d_h: ArrayView2<f64>,
    grads: &mut LstmDir,
) -> Array2<f64> {
    let t_len = d_h.nrows();
    let h_dim = p.hidden();
    let mut d_a = Array2::<f64>::zeros((t_len, 4 * h_dim));
    let mut dh_next = Array1::<f64>::zeros(h_dim);
    let mut dc_next = Array1::<f64>::zeros(h_dim);
    let w_hh_t = p.w_hh.t();
    for t in (0..t_len).rev() {
        let gates = cache.gates.row(t);
        {
            let mut row = d_a.row_mut(t);
            for k in 0..h_dim {
                let i = gates[k];
                let f = gates[h_dim + k];
                let g = gates[2 * h_dim + k];
                let o = gates[3 * h_dim + k];
                let tc = cache.tanh_c[[t, k]];
                let c_prev = if t > 0 { cache.c[[t - 1, k]] } else { 0.0 };

                let dh = d_h[[t, k]] + dh_next[k];
                let d_o = dh * tc;
                let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * c_prev;
                dc_next[k] = dc * f;

                row[k] = d_i * i * (1.0 - i);
                row[h_dim + k] = d_f * f * (1.0 - f);
                row[2 * h_dim + k] = d_g * (1.0 - g * g);
                row[3 * h_dim + k] = d_o * o * (1.0 - o);
            }
        }
        dh_next = d_a.row(t).dot(&w_hh_t);
    }

    grads.w_ih = cache.input.t().dot(&d_a);
    grads.w_hh = if t_len > 1 {
        cache
            .h
            .slice(s![..t_len - 1, ..])
            .t()
            .dot(&d_a.slice(s![1.., ..]))
    } else {
        Array2::zeros(p.w_hh.raw_dim())
    };
    grads.b = d_a.sum_axis(Axis(0));
    d_a.dot(&p.w_ih.t())
}
