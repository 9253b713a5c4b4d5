use ndarray::{s, Array2, Axis};

use super::*;
use crate::corpus::{ContourNormStats, CONTOUR_DIM};
use crate::rng::Rng;

fn cfg(seed: u64) -> ModelConfig {
    ModelConfig {
        input_dim: 6,
        dense_units: 10,
        lstm_units: 7,
        output_dim: CONTOUR_DIM,
        dense_activation: Activation::Relu,
        seed,
    }
}

fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gaussian())
}

#[test]
fn zero_weights_and_inputs_give_zero_output() {
    let mut p = init_params(&cfg(1)).unwrap();
    for t in p.slices_mut() {
        t.fill(0.0);
    }
    let y = model_predict(&p, &Array2::zeros((9, 6))).unwrap();
    assert_eq!(y.dim(), (9, CONTOUR_DIM));
    assert!(y.iter().all(|&v| v == 0.0));
}

#[test]
fn single_frame_shape() {
    let p = init_params(&cfg(2)).unwrap();
    let y = model_predict(&p, &Array2::ones((1, 6))).unwrap();
    assert_eq!(y.dim(), (1, 800));
    assert!(y.iter().all(|v| v.is_finite()));
}

#[test]
fn wrong_input_width_is_rejected() {
    let p = init_params(&cfg(2)).unwrap();
    assert!(model_forward(&p, &Array2::zeros((3, 5))).is_err());
}

fn swap_row_halves(w: &Array2<f64>) -> Array2<f64> {
    let h = w.nrows() / 2;
    ndarray::concatenate(Axis(0), &[w.slice(s![h.., ..]), w.slice(s![..h, ..])]).unwrap()
}

#[test]
fn bidirectional_layers_are_time_symmetric() {
    let p = init_params(&cfg(5)).unwrap();
    let mut q = p.clone();
    std::mem::swap(&mut q.bilstm1.fwd, &mut q.bilstm1.bwd);
    std::mem::swap(&mut q.bilstm2.fwd, &mut q.bilstm2.bwd);
    q.bilstm2.fwd.w_ih = swap_row_halves(&q.bilstm2.fwd.w_ih);
    q.bilstm2.bwd.w_ih = swap_row_halves(&q.bilstm2.bwd.w_ih);
    q.out.w = swap_row_halves(&q.out.w);

    let mut rng = Rng::new(11);
    let x = gaussian(&mut rng, 13, 6);
    let x_rev = x.slice(s![..;-1, ..]).to_owned();
    let y = model_predict(&p, &x).unwrap();
    let y_rev = model_predict(&q, &x_rev).unwrap();
    let diff = (&y.slice(s![..;-1, ..]) - &y_rev)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(diff <= 1e-10, "max diff {diff}");
}

#[test]
fn mse_matches_direct_sum() {
    let pred = ndarray::array![[1.0, 2.0], [3.0, 4.0]];
    let target = ndarray::array![[1.5, 2.0], [2.0, 6.0]];
    let expected = (0.25 + 0.0 + 1.0 + 4.0) / 4.0;
    assert!((mse_loss(&pred, &target).unwrap() - expected).abs() < 1e-12);
    assert_eq!(mse_loss(&pred, &pred).unwrap(), 0.0);
    assert!(mse_loss(&pred, &Array2::zeros((2, 3))).is_err());
    assert!(mse_loss(&Array2::zeros((0, 2)), &Array2::zeros((0, 2))).is_err());
}

#[test]
fn zero_residual_gives_zero_gradient() {
    let p = init_params(&cfg(3)).unwrap();
    let x = gaussian(&mut Rng::new(1), 5, 6);
    let (y, cache) = model_forward(&p, &x).unwrap();
    let g = model_backward(&p, &cache, &y).unwrap();
    assert!(g.slices().iter().all(|t| t.iter().all(|&v| v == 0.0)));
}

#[test]
fn output_bias_gradient_is_column_mean_of_residual() {
    let p = init_params(&cfg(3)).unwrap();
    let mut rng = Rng::new(2);
    let x = gaussian(&mut rng, 4, 6);
    let target = gaussian(&mut rng, 4, CONTOUR_DIM);
    let (y, cache) = model_forward(&p, &x).unwrap();
    let g = model_backward(&p, &cache, &target).unwrap();
    let n = y.len() as f64;
    for c in 0..CONTOUR_DIM {
        let expected: f64 = (0..4).map(|t| 2.0 * (y[[t, c]] - target[[t, c]]) / n).sum();
        assert!((g.out.b[c] - expected).abs() < 1e-12);
    }
}

#[test]
fn stale_cache_is_rejected() {
    let p = init_params(&cfg(3)).unwrap();
    let x = gaussian(&mut Rng::new(1), 3, 6);
    let (y, cache) = model_forward(&p, &x).unwrap();
    let mut q = p.clone();
    q.out.b[0] += 1.0;
    assert!(model_backward(&q, &cache, &y).is_err());
    assert!(model_backward(&p, &cache, &Array2::zeros((2, CONTOUR_DIM))).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    for seed in [0, 1, 2] {
        let r = grad_check(&small_config(seed), 7, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "seed {seed}: {r:?}");
        assert_eq!(r.n_checked, init_params(&small_config(seed)).unwrap().n_params());
    }
}

#[test]
fn coarse_epsilon_degrades_but_stays_finite() {
    let fine = grad_check(&small_config(0), 6, 1e-5).unwrap();
    let coarse = grad_check(&small_config(0), 6, 1e-1).unwrap();
    assert!(coarse.max_rel_error.is_finite());
    assert!(coarse.max_rel_error > fine.max_rel_error);
}

#[test]
fn tanh_gradients_match_finite_differences() {
    let mut c = small_config(4);
    c.dense_activation = Activation::Tanh;
    let r = grad_check(&c, 5, 1e-5).unwrap();
    assert!(r.max_rel_error < 1e-5, "{r:?}");
}

#[test]
fn adam_zero_gradient_keeps_parameters() {
    let mut p = init_params(&cfg(0)).unwrap();
    let before = p.clone();
    let mut st = AdamState::new(&p, 1e-3);
    let g = p.zeros_like();
    for _ in 0..3 {
        adam_step(&mut p, &g, &mut st);
    }
    assert_eq!(p, before);
}

#[test]
fn adam_first_step_size() {
    let mut p = init_params(&cfg(0)).unwrap();
    let before = p.clone();
    let mut st = AdamState::new(&p, 1e-3);
    let mut g = p.zeros_like();
    for t in g.slices_mut() {
        t.fill(1.0);
    }
    adam_step(&mut p, &g, &mut st);
    let step = p.out.b[0] - before.out.b[0];
    // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps).
    assert!((step - (-1e-3 / (1.0 + 1e-8))).abs() < 1e-15, "{step}");
    for _ in 0..20 {
        let prev = p.out.b[0];
        adam_step(&mut p, &g, &mut st);
        assert!((p.out.b[0] - prev + 1e-3).abs() < 1e-9);
    }
}

#[test]
fn adam_reduces_loss_on_fixed_batch() {
    let p0 = init_params(&cfg(7)).unwrap();
    let mut rng = Rng::new(3);
    let x = gaussian(&mut rng, 8, 6);
    let target = gaussian(&mut rng, 8, CONTOUR_DIM) * 0.5;
    let mut p = p0.clone();
    let mut st = AdamState::new(&p, 1e-2);
    let start = mse_loss(&model_predict(&p, &x).unwrap(), &target).unwrap();
    for _ in 0..50 {
        let (_, cache) = model_forward(&p, &x).unwrap();
        let g = model_backward(&p, &cache, &target).unwrap();
        adam_step(&mut p, &g, &mut st);
    }
    let end = mse_loss(&model_predict(&p, &x).unwrap(), &target).unwrap();
    assert!(end <= 0.5 * start, "start {start}, end {end}");
}

fn toy_data(seed: u64, n: usize) -> Vec<SeqData> {
    let mut rng = Rng::new(seed);
    let mix = gaussian(&mut rng, 6, CONTOUR_DIM) * 0.3;
    (0..n)
        .map(|i| {
            let x = gaussian(&mut rng, 5 + i % 4, 6);
            let y = x.mapv(f64::tanh).dot(&mix);
            SeqData::new(x, y).unwrap()
        })
        .collect()
}

fn toy_tcfg() -> TrainConfig {
    TrainConfig {
        max_epochs: 6,
        batch_sequences: 3,
        patience: 3,
        seed: 9,
        lr: 1e-2,
    }
}

#[test]
fn training_is_deterministic_and_improves() {
    let train = toy_data(1, 8);
    let val = toy_data(2, 3);
    let (p1, h1) = train_model(&train, &val, &cfg(1), &toy_tcfg()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (p2, h2) = pool.install(|| train_model(&train, &val, &cfg(1), &toy_tcfg()).unwrap());
    assert_eq!(p1, p2);
    assert_eq!(h1, h2);
    assert_eq!(h1.to_csv(), h2.to_csv());
    assert!(h1.best_val_loss() < h1.val_loss[0] || h1.best_epoch == 1);
    assert!(h1.train_loss.last().unwrap() < &h1.train_loss[0]);
}

#[test]
fn early_stopping_restores_best_epoch() {
    let train = toy_data(1, 8);
    let val = toy_data(2, 3);
    let tcfg = TrainConfig {
        max_epochs: 40,
        patience: 4,
        ..toy_tcfg()
    };
    // Sensible steps for three epochs, then steps large enough to wreck the fit.
    let schedule = |e: usize| if e <= 3 { 1e-2 } else { 5.0 };
    let (best, h) = train_model_with_schedule(&train, &val, &cfg(1), &tcfg, schedule).unwrap();
    assert!(h.stopped_epoch < tcfg.max_epochs);
    assert_eq!(h.stopped_epoch - h.best_epoch, tcfg.patience);
    assert_eq!(h.val_loss.len(), h.stopped_epoch);
    for e in h.best_epoch..h.stopped_epoch {
        assert!(h.val_loss[e] >= h.best_val_loss());
    }
    // Re-running with a schedule that halts parameter movement after the best
    // epoch reproduces the same parameters.
    let best_epoch = h.best_epoch;
    let frozen = move |e: usize| if e <= best_epoch { schedule(e) } else { 0.0 };
    let (again, _) = train_model_with_schedule(&train, &val, &cfg(1), &tcfg, frozen).unwrap();
    assert_eq!(again, best);
    assert_eq!(dataset_mse(&best, &val).unwrap(), h.best_val_loss());
}

#[test]
fn train_config_validation() {
    let mut t = toy_tcfg();
    t.patience = t.max_epochs;
    assert!(t.validate().is_err());
    let mut t = toy_tcfg();
    t.batch_sequences = 0;
    assert!(t.validate().is_err());
    assert!(SeqData::new(Array2::zeros((3, 6)), Array2::zeros((4, 800))).is_err());
}

#[test]
fn zero_network_predicts_mean_contour() {
    let mut p = init_params(&cfg(0)).unwrap();
    for t in p.slices_mut() {
        t.fill(0.0);
    }
    let mean: Vec<f64> = (0..CONTOUR_DIM).map(|k| 40.0 + k as f64 * 0.05).collect();
    let std = vec![3.0; CONTOUR_DIM];
    let stats = ContourNormStats::new(mean.clone(), std).unwrap();
    let seq = predict(&p, &Array2::zeros((4, 6)), &stats, 50.0).unwrap();
    assert_eq!(seq.len(), 4);
    for f in &seq.frames {
        let flat = f.flat();
        for k in 0..CONTOUR_DIM {
            assert!((flat[k] - mean[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let p = init_params(&cfg(4)).unwrap();
    let mut ck = Checkpoint::new(p.clone());
    ck.settings.insert("experiment".into(), "onehot-expert".into());
    ck.settings.insert("split.seed".into(), "17".into());
    ck.extras.insert("contour_mean".into(), row_array(&[0.1, 1e-300, -2.5e17]));
    let text = ck.to_text().unwrap();
    assert!(text.starts_with("VTINV1\n"));
    let back = Checkpoint::parse(&text).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.params.fingerprint(), p.fingerprint());
    assert_eq!(back.to_text().unwrap(), text);
    assert_eq!(array_row(back.extra("contour_mean").unwrap()).unwrap()[1], 1e-300);
}

#[test]
fn checkpoint_rejects_damage() {
    let ck = Checkpoint::new(init_params(&cfg(4)).unwrap());
    let text = ck.to_text().unwrap();
    assert!(Checkpoint::parse(&text.replacen("VTINV1", "VTINV2", 1)).is_err());
    assert!(Checkpoint::parse(&text.replacen("[array out.b", "[array out.c", 1)).is_err());
    let truncated: String = text.lines().take(text.lines().count() - 1).collect::<Vec<_>>().join("\n");
    assert!(Checkpoint::parse(&truncated).is_err());
    let mut bad = ck.clone();
    bad.settings.insert("model.lstm_units".into(), "3".into());
    assert!(bad.to_text().is_err());
}
