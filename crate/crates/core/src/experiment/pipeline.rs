//! Corpus → network inputs and targets for one experiment.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;

use super::config::{ExperimentKind, RunConfig};
use crate::corpus::{
    contour_norm_stats, normalize_contours, remove_silence, split_corpus, ContourNormStats, ContourSequence, SeqKey,
    SequenceRecord, Split, SplitAssignment, AUDIO_SAMPLE_RATE_HZ,
};
use crate::dsp::{feature_zscore, mfcc39, FeatureMatrix, FeatureNormStats, MfccExtractor};
use crate::error::{Error, Result};
use crate::net::SeqData;
use crate::phonfeat::{build_inventory, onehot_encode, session_normalize, softmax_rows, PhoneInventory, SessionStats};

/// Statistics fitted on the training split (or restored from a checkpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct FittedStats {
    /// Only the MFCC baseline standardizes its inputs.
    pub features: Option<FeatureNormStats>,
    pub contours: ContourNormStats,
    /// One-hot experiments only.
    pub inventory: Option<PhoneInventory>,
}

/// One sequence after featurization and silence removal.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSequence {
    pub key: SeqKey,
    /// Network input, one row per retained frame.
    pub features: Array2<f64>,
    /// Ground-truth contours of the retained frames, in pixels.
    pub contours: ContourSequence,
    /// Original frame index of each retained frame.
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub kind: ExperimentKind,
    pub split: SplitAssignment,
    pub stats: FittedStats,
    pub sequences: BTreeMap<SeqKey, PreparedSequence>,
}

impl PreparedCorpus {
    pub fn input_dim(&self) -> usize {
        self.sequences
            .values()
            .next()
            .map_or(0, |s| s.features.ncols())
    }

    /// Sequences of one split with at least one retained frame, in split
    /// order.
    pub fn split_sequences(&self, split: Split) -> Vec<&PreparedSequence> {
        self.split
            .get(split)
            .iter()
            .filter_map(|k| self.sequences.get(k))
            .filter(|s| !s.kept.is_empty())
            .collect()
    }

    /// Network inputs and normalized targets for one split.
    pub fn seq_data(&self, split: Split) -> Result<Vec<SeqData>> {
        self.split_sequences(split)
            .into_iter()
            .map(|s| {
                SeqData::new(
                    s.features.clone(),
                    normalize_contours(&s.contours, &self.stats.contours),
                )
            })
            .collect()
    }
}

fn session_stats(records: &[SequenceRecord], cfg: &RunConfig) -> Result<BTreeMap<String, SessionStats>> {
    let mut by_session: BTreeMap<&str, Vec<Array2<f64>>> = BTreeMap::new();
    for r in records {
        let logits = r
            .w2v_logits
            .as_ref()
            .ok_or_else(|| Error::contract(format!("{}: no phonemizer logits for the w2v experiment", r.key)))?;
        by_session
            .entry(r.key.session_id.as_str())
            .or_default()
            .push(softmax_rows(logits));
    }
    by_session
        .into_iter()
        .map(|(s, mats)| Ok((s.to_string(), SessionStats::compute(mats.iter(), cfg.session_norm)?)))
        .collect()
}

/// Inventory over every sequence's alignment of the chosen kind.
pub fn corpus_inventory(records: &[SequenceRecord], kind: ExperimentKind, cfg: &RunConfig) -> Result<Option<PhoneInventory>> {
    let aligns: Vec<&[crate::corpus::AlignmentSegment]> = match kind {
        ExperimentKind::OnehotAuto => records.iter().map(|r| r.align_auto.as_slice()).collect(),
        ExperimentKind::OnehotExpert => records.iter().map(|r| r.align_expert.as_slice()).collect(),
        _ => return Ok(None),
    };
    build_inventory(aligns, &cfg.silence_labels).map(Some)
}

fn check_frame_rate(records: &[SequenceRecord], cfg: &RunConfig) -> Result<()> {
    let hop = cfg.mfcc.hop_samples();
    for r in records {
        let spf = AUDIO_SAMPLE_RATE_HZ as f64 / r.contours.frame_rate_hz;
        if (spf - hop).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "{}: MFCC hop of {hop} samples does not match the {} Hz frame rate",
                r.key, r.contours.frame_rate_hz
            )));
        }
    }
    Ok(())
}

/// Featurizes every record, removes silence using the expert alignment,
/// splits the corpus and fits (or applies the given) normalization.
pub fn prepare_corpus(
    records: &[SequenceRecord],
    kind: ExperimentKind,
    cfg: &RunConfig,
    fitted: Option<FittedStats>,
) -> Result<PreparedCorpus> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::contract("empty corpus"));
    }
    let keys: Vec<SeqKey> = records.iter().map(|r| r.key.clone()).collect();
    let split = split_corpus(&keys, cfg.split_seed)?;

    let extractor = match kind {
        ExperimentKind::Baseline => {
            check_frame_rate(records, cfg)?;
            Some(MfccExtractor::new(cfg.mfcc.clone())?)
        }
        _ => None,
    };
    let sessions = match kind {
        ExperimentKind::W2v => session_stats(records, cfg)?,
        _ => BTreeMap::new(),
    };
    let inventory = match &fitted {
        Some(f) => f.inventory.clone(),
        None => corpus_inventory(records, kind, cfg)?,
    };

    let raw: Vec<PreparedSequence> = records
        .par_iter()
        .map(|r| {
            let n = r.contours.len();
            let rate = r.contours.frame_rate_hz;
            let feats: FeatureMatrix = match kind {
                ExperimentKind::Baseline => mfcc39(extractor.as_ref().expect("baseline extractor"), &r.audio, n)?,
                ExperimentKind::W2v => {
                    let logits = r.w2v_logits.as_ref().expect("checked in session_stats");
                    session_normalize(&softmax_rows(logits), &sessions[&r.key.session_id])?
                }
                ExperimentKind::OnehotAuto | ExperimentKind::OnehotExpert => {
                    let inv = inventory.as_ref().ok_or_else(|| Error::contract("one-hot run without inventory"))?;
                    let align = if kind == ExperimentKind::OnehotAuto {
                        &r.align_auto
                    } else {
                        &r.align_expert
                    };
                    onehot_encode(align, inv, &cfg.silence_labels, rate, n)?
                }
            };
            let (f, c, kept) = remove_silence(&feats, &r.contours, &r.align_expert, &cfg.silence_labels)?;
            if kept.is_empty() {
                log::warn!("{}: no speech frames, sequence skipped", r.key);
            }
            Ok(PreparedSequence {
                key: r.key.clone(),
                features: f.data,
                contours: c,
                kept,
            })
        })
        .collect::<Result<_>>()?;
    let mut sequences: BTreeMap<SeqKey, PreparedSequence> = raw.into_iter().map(|s| (s.key.clone(), s)).collect();

    let train_keys: Vec<&SeqKey> = split.train.iter().filter(|k| !sequences[*k].kept.is_empty()).collect();
    let stats = match fitted {
        Some(f) => f,
        None => {
            let features = match kind {
                ExperimentKind::Baseline => Some(FeatureNormStats::fit(train_keys.iter().map(|k| &sequences[*k].features))?),
                _ => None,
            };
            let contours = contour_norm_stats(train_keys.iter().map(|k| &sequences[*k].contours))?;
            FittedStats {
                features,
                contours,
                inventory,
            }
        }
    };
    if let Some(fs) = &stats.features {
        for s in sequences.values_mut() {
            let m = FeatureMatrix::new(s.features.clone(), crate::dsp::FeatureKind::Mfcc39)?;
            s.features = feature_zscore(&m, fs)?.data;
        }
    }
    Ok(PreparedCorpus {
        kind,
        split,
        stats,
        sequences,
    })
}
