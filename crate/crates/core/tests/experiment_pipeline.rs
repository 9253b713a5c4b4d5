use vtinv_core::corpus::{load_corpus, Split};
use vtinv_core::experiment::*;
use vtinv_core::net::Checkpoint;
use vtinv_core::synth::{write_corpus, SynthSpec};

fn corpus(n: usize, frames: usize) -> (tempfile::TempDir, Vec<vtinv_core::corpus::SequenceRecord>) {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        n_sequences: n,
        frames_per_sequence: frames,
        seed: 3,
        ..SynthSpec::default()
    };
    write_corpus(dir.path(), &spec).unwrap();
    let recs = load_corpus(dir.path()).unwrap();
    (dir, recs)
}

fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::preset("desk").unwrap();
    cfg.dense_units = 8;
    cfg.lstm_units = 6;
    cfg.train.max_epochs = 3;
    cfg.train.patience = 2;
    cfg
}

#[test]
fn input_width_follows_experiment() {
    let (_d, recs) = corpus(20, 30);
    let cfg = tiny_config();
    let dims: Vec<usize> = ExperimentKind::ALL
        .iter()
        .map(|&k| prepare_corpus(&recs, k, &cfg, None).unwrap().input_dim())
        .collect();
    let inv = |k| corpus_inventory(&recs, k, &cfg).unwrap().unwrap().len();
    let (auto, expert) = (inv(ExperimentKind::OnehotAuto), inv(ExperimentKind::OnehotExpert));
    assert!(expert <= 11 && expert > 0);
    assert_eq!(dims, vec![39, 61, auto, expert]);
}

#[test]
fn silence_removal_keeps_the_same_frames_in_every_experiment() {
    let (_d, recs) = corpus(20, 30);
    let cfg = tiny_config();
    let kept = |k| {
        let p = prepare_corpus(&recs, k, &cfg, None).unwrap();
        p.sequences.values().map(|s| s.kept.clone()).collect::<Vec<_>>()
    };
    let reference = kept(ExperimentKind::Baseline);
    for k in [ExperimentKind::W2v, ExperimentKind::OnehotAuto, ExperimentKind::OnehotExpert] {
        assert_eq!(kept(k), reference);
    }
}

#[test]
fn baseline_features_are_standardized_on_training_split() {
    let (_d, recs) = corpus(20, 30);
    let p = prepare_corpus(&recs, ExperimentKind::Baseline, &tiny_config(), None).unwrap();
    let train = p.split_sequences(Split::Train);
    let rows: usize = train.iter().map(|s| s.features.nrows()).sum();
    for j in 0..39 {
        let mean: f64 = train.iter().map(|s| s.features.column(j).sum()).sum::<f64>() / rows as f64;
        assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
    }
}

#[test]
fn checkpoint_restores_identical_inputs_and_predictions() {
    let (_d, recs) = corpus(20, 30);
    let cfg = tiny_config();
    for kind in [ExperimentKind::Baseline, ExperimentKind::OnehotAuto] {
        let data = prepare_corpus(&recs, kind, &cfg, None).unwrap();
        let out = train_prepared(&data, &cfg).unwrap();
        let text = out.checkpoint.to_text().unwrap();
        let ck = Checkpoint::parse(&text).unwrap();
        let (again, restored_cfg) = prepare_from_checkpoint(&recs, &ck).unwrap();
        assert_eq!(restored_cfg, cfg);
        assert_eq!(again.sequences, data.sequences);
        let eval = evaluate_model(&ck.params, &again, Split::Validation, &restored_cfg).unwrap();
        assert_eq!(eval, out.validation);
    }
}

#[test]
fn constant_mean_matches_direct_dispersion() {
    let (_d, recs) = corpus(20, 30);
    let cfg = tiny_config();
    let p = prepare_corpus(&recs, ExperimentKind::OnehotExpert, &cfg, None).unwrap();
    let eval = evaluate_constant_mean(&p, Split::Test, &cfg).unwrap();

    let train: Vec<Vec<f64>> = p
        .split_sequences(Split::Train)
        .iter()
        .flat_map(|s| s.contours.frames.iter().map(|f| f.flat()))
        .collect();
    let mean: Vec<f64> = (0..800).map(|k| train.iter().map(|f| f[k]).sum::<f64>() / train.len() as f64).collect();
    let test: Vec<Vec<f64>> = p
        .split_sequences(Split::Test)
        .iter()
        .flat_map(|s| s.contours.frames.iter().map(|f| f.flat()))
        .collect();
    let mut per_art = [0.0; 8];
    for f in &test {
        for (a, acc) in per_art.iter_mut().enumerate() {
            let sq: f64 = (0..100).map(|k| (1.62 * (f[a * 100 + k] - mean[a * 100 + k])).powi(2)).sum();
            *acc += (sq / 100.0).sqrt();
        }
    }
    let overall = per_art.iter().map(|s| s / test.len() as f64).sum::<f64>() / 8.0;
    assert!((eval.report.overall.rmse_mean_mm - overall).abs() < 1e-9);
}

#[test]
fn run_outputs_are_written() {
    let (_d, recs) = corpus(20, 30);
    let out = train_experiment(&recs, ExperimentKind::OnehotExpert, &tiny_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    for f in [CHECKPOINT_FILE, HISTORY_FILE, REPORT_FILE, CONFIG_FILE, "report.frames.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let report = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
    assert_eq!(report.lines().count(), 10);
}

#[test]
fn w2v_requires_logits() {
    let (_d, mut recs) = corpus(20, 30);
    recs[4].w2v_logits = None;
    assert!(prepare_corpus(&recs, ExperimentKind::W2v, &tiny_config(), None).is_err());
}
