//! Training, evaluation and prediction runs over a corpus directory.

use std::path::Path;

use super::config::{ExperimentKind, RunConfig};
use super::pipeline::{prepare_corpus, FittedStats, PreparedCorpus, PreparedSequence};
use crate::corpus::{ContourNormStats, ContourSequence, SeqKey, SequenceRecord, Split};
use crate::dsp::FeatureNormStats;
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_report, sequence_errors, write_frame_errors_csv, write_report_csv, EvalReport, FrameArticulatorError,
};
use crate::net::{array_row, predict, row_array, train_model, Checkpoint, ModelParams, TrainHistory};
use crate::phonfeat::PhoneInventory;
use crate::synth::ConstantMeanPredictor;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const CONFIG_FILE: &str = "config.txt";

/// Sibling file holding the per-frame errors behind a report, used for
/// significance tests against it.
pub fn frame_errors_path(report_path: &Path) -> std::path::PathBuf {
    let stem = report_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report_path.with_file_name(format!("{stem}.frames.csv"))
}

/// Evaluation of one split: aggregate report plus the per-frame errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub frames: Vec<Vec<FrameArticulatorError>>,
}

impl Evaluation {
    /// Writes the report CSV and its per-frame companion.
    pub fn write(&self, report_path: &Path) -> Result<()> {
        if let Some(dir) = report_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(report_path, write_report_csv(&self.report)).map_err(|e| Error::io(report_path, e))?;
        let fp = frame_errors_path(report_path);
        std::fs::write(&fp, write_frame_errors_csv(&self.frames)).map_err(|e| Error::io(&fp, e))
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
    pub validation: Evaluation,
    pub config: RunConfig,
}

impl TrainOutcome {
    /// Writes checkpoint, history, validation report and resolved config.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        self.checkpoint.save(&out_dir.join(CHECKPOINT_FILE))?;
        let h = out_dir.join(HISTORY_FILE);
        std::fs::write(&h, self.history.to_csv()).map_err(|e| Error::io(&h, e))?;
        let c = out_dir.join(CONFIG_FILE);
        std::fs::write(&c, self.config.to_text()).map_err(|e| Error::io(&c, e))?;
        self.validation.write(&out_dir.join(REPORT_FILE))
    }
}

/// Model predictions for every sequence of a split, in pixels.
pub fn predict_split(
    params: &ModelParams,
    data: &PreparedCorpus,
    split: Split,
) -> Result<Vec<(SeqKey, ContourSequence)>> {
    data.split_sequences(split)
        .into_iter()
        .map(|s| {
            let pred = predict(params, &s.features, &data.stats.contours, s.contours.frame_rate_hz)?;
            Ok((s.key.clone(), pred))
        })
        .collect()
}

/// Frame errors of predictions against the retained ground-truth frames,
/// numbered consecutively across sequences in split order.
pub fn evaluate_predictions(
    data: &PreparedCorpus,
    split: Split,
    predictions: &[(SeqKey, ContourSequence)],
    cfg: &RunConfig,
) -> Result<Evaluation> {
    let seqs = data.split_sequences(split);
    if seqs.len() != predictions.len() {
        return Err(Error::contract("one prediction per evaluated sequence is required"));
    }
    let mut frames = Vec::new();
    for (s, (key, pred)) in seqs.iter().zip(predictions) {
        if &s.key != key {
            return Err(Error::contract(format!("prediction for {key} does not match {}", s.key)));
        }
        frames.extend(sequence_errors(&pred.frames, &s.contours.frames, cfg.median_mode, frames.len())?);
    }
    Ok(Evaluation {
        report: aggregate_report(&frames)?,
        frames,
    })
}

pub fn evaluate_model(params: &ModelParams, data: &PreparedCorpus, split: Split, cfg: &RunConfig) -> Result<Evaluation> {
    let preds = predict_split(params, data, split)?;
    evaluate_predictions(data, split, &preds, cfg)
}

/// Evaluation of the training-mean contour predictor on one split.
pub fn evaluate_constant_mean(data: &PreparedCorpus, split: Split, cfg: &RunConfig) -> Result<Evaluation> {
    let predictor = ConstantMeanPredictor::fit(data.split_sequences(Split::Train).into_iter().map(|s| &s.contours))?;
    let preds = data
        .split_sequences(split)
        .into_iter()
        .map(|s| Ok((s.key.clone(), predictor.predict(&s.features, s.contours.frame_rate_hz)?)))
        .collect::<Result<Vec<_>>>()?;
    evaluate_predictions(data, split, &preds, cfg)
}

fn build_checkpoint(params: ModelParams, kind: ExperimentKind, cfg: &RunConfig, stats: &FittedStats) -> Result<Checkpoint> {
    let mut ck = Checkpoint::new(params);
    for (k, v) in cfg.pairs() {
        if !matches!(k, "model.dense_units" | "model.lstm_units" | "model.activation") {
            ck.settings.insert(k.to_string(), v);
        }
    }
    ck.settings.insert("experiment".into(), kind.name().into());
    if let Some(inv) = &stats.inventory {
        if inv.labels().iter().any(|l| l.contains(char::is_whitespace)) {
            return Err(Error::contract("phone labels cannot contain whitespace"));
        }
        ck.settings.insert("features.inventory".into(), inv.labels().join(" "));
    }
    ck.extras.insert("contour_mean".into(), row_array(&stats.contours.mean));
    ck.extras.insert("contour_std".into(), row_array(&stats.contours.std));
    if let Some(f) = &stats.features {
        ck.extras.insert("feature_mean".into(), row_array(&f.mean));
        ck.extras.insert("feature_std".into(), row_array(&f.std));
    }
    Ok(ck)
}

/// Everything needed to rebuild a run's inputs from a checkpoint.
pub struct RestoredRun {
    pub kind: ExperimentKind,
    pub config: RunConfig,
    pub stats: FittedStats,
}

pub fn restore_run(ck: &Checkpoint) -> Result<RestoredRun> {
    let kind: ExperimentKind = ck.setting("experiment")?.parse().map_err(Error::Config)?;
    let mut config = RunConfig::default();
    for (k, v) in &ck.settings {
        if k != "experiment" && k != "features.inventory" {
            config.set(k, v)?;
        }
    }
    let mc = ck.model_config();
    config.dense_units = mc.dense_units;
    config.lstm_units = mc.lstm_units;
    config.activation = mc.dense_activation;

    let contours = ContourNormStats::new(
        array_row(ck.extra("contour_mean")?)?.to_vec(),
        array_row(ck.extra("contour_std")?)?.to_vec(),
    )?;
    let features = match (ck.extras.get("feature_mean"), ck.extras.get("feature_std")) {
        (Some(m), Some(s)) => Some(FeatureNormStats {
            mean: array_row(m)?.to_vec(),
            std: array_row(s)?.to_vec(),
        }),
        _ => None,
    };
    let inventory = match ck.settings.get("features.inventory") {
        Some(v) => Some(PhoneInventory::from_labels(v.split(' '))?),
        None => None,
    };
    Ok(RestoredRun {
        kind,
        config,
        stats: FittedStats {
            features,
            contours,
            inventory,
        },
    })
}

/// Prepares the corpus exactly as the checkpointed run saw it.
pub fn prepare_from_checkpoint(records: &[SequenceRecord], ck: &Checkpoint) -> Result<(PreparedCorpus, RunConfig)> {
    let run = restore_run(ck)?;
    let data = prepare_corpus(records, run.kind, &run.config, Some(run.stats))?;
    if data.input_dim() != ck.model_config().input_dim {
        return Err(Error::contract(format!(
            "corpus yields {}-dimensional features but the model expects {}",
            data.input_dim(),
            ck.model_config().input_dim
        )));
    }
    Ok((data, run.config))
}

/// Trains one experiment end to end and evaluates it on the validation split.
pub fn train_experiment(records: &[SequenceRecord], kind: ExperimentKind, cfg: &RunConfig) -> Result<TrainOutcome> {
    let data = prepare_corpus(records, kind, cfg, None)?;
    train_prepared(&data, cfg)
}

pub fn train_prepared(data: &PreparedCorpus, cfg: &RunConfig) -> Result<TrainOutcome> {
    let train = data.seq_data(Split::Train)?;
    let val = data.seq_data(Split::Validation)?;
    let mcfg = cfg.model_config(data.input_dim());
    log::info!(
        "training {} on {} sequences ({} validation), input_dim {}, model seed {}, train seed {}, split seed {}",
        data.kind,
        train.len(),
        val.len(),
        mcfg.input_dim,
        cfg.model_seed,
        cfg.train.seed,
        cfg.split_seed
    );
    let (params, history) = train_model(&train, &val, &mcfg, &cfg.train)?;
    let validation = evaluate_model(&params, data, Split::Validation, cfg)?;
    let checkpoint = build_checkpoint(params, data.kind, cfg, &data.stats)?;
    Ok(TrainOutcome {
        checkpoint,
        history,
        validation,
        config: cfg.clone(),
    })
}

/// Predicted and true contours of one sequence's retained frames.
pub fn predict_sequence(records: &[SequenceRecord], ck: &Checkpoint, key: &SeqKey) -> Result<(ContourSequence, PreparedSequence)> {
    let (data, _) = prepare_from_checkpoint(records, ck)?;
    let seq = data
        .sequences
        .get(key)
        .ok_or_else(|| Error::Config(format!("sequence {key} not found in corpus")))?;
    if seq.kept.is_empty() {
        return Err(Error::contract(format!("{key} has no speech frames")));
    }
    let pred = predict(&ck.params, &seq.features, &data.stats.contours, seq.contours.frame_rate_hz)?;
    Ok((pred, seq.clone()))
}
