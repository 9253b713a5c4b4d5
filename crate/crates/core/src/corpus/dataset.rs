//! Dataset preparation: silence removal, sequence-level splitting, and
//! contour normalization.

use std::collections::BTreeSet;
use std::fmt;

use ndarray::{Array2, Axis};

use super::types::*;
use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Floor applied to every standard deviation used for division.
pub const STD_FLOOR: f64 = 1e-8;

/// Silence labels used when none are configured.
pub fn default_silence_labels() -> BTreeSet<String> {
    ["sil", "sp", "#"].into_iter().map(String::from).collect()
}

/// Drops frames whose midpoint falls in a silence segment or in no segment.
///
/// Retained frames keep their relative order; both outputs have equal length.
/// Also returns the original indices of the retained frames.
pub fn remove_silence(
    features: &FeatureMatrix,
    contours: &ContourSequence,
    align: &[AlignmentSegment],
    silence_labels: &BTreeSet<String>,
) -> Result<(FeatureMatrix, ContourSequence, Vec<usize>)> {
    if features.n_frames() != contours.len() {
        return Err(Error::contract(format!(
            "feature rows ({}) != contour frames ({})",
            features.n_frames(),
            contours.len()
        )));
    }
    let keep = speech_frames(contours.len(), contours.frame_rate_hz, align, silence_labels);
    let data = features.data.select(Axis(0), &keep);
    let frames = keep.iter().map(|&t| contours.frames[t].clone()).collect();
    Ok((
        FeatureMatrix::new(data, features.kind)?,
        ContourSequence {
            frames,
            frame_rate_hz: contours.frame_rate_hz,
        },
        keep,
    ))
}

/// Indices of frames whose midpoint lies in a non-silence segment.
pub fn speech_frames(
    n_frames: usize,
    frame_rate_hz: f64,
    align: &[AlignmentSegment],
    silence_labels: &BTreeSet<String>,
) -> Vec<usize> {
    (0..n_frames)
        .filter(|&t| {
            segment_at(align, frame_midpoint_s(t, frame_rate_hz))
                .is_some_and(|s| !silence_labels.contains(&s.label))
        })
        .collect()
}

/// Identifies one recorded sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeqKey {
    pub session_id: String,
    pub seq_id: String,
}

impl SeqKey {
    pub fn new(session_id: impl Into<String>, seq_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            seq_id: seq_id.into(),
        }
    }
}

impl std::str::FromStr for SeqKey {
    type Err = String;

    /// Parses `session/seq`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.split_once('/') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains('/') => Ok(SeqKey::new(a, b)),
            _ => Err(format!("expected `session/sequence`, found `{s}`")),
        }
    }
}

impl fmt::Display for SeqKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.session_id, self.seq_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (train|val|test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<SeqKey>,
    pub validation: Vec<SeqKey>,
    pub test: Vec<SeqKey>,
}

impl SplitAssignment {
    pub fn get(&self, split: Split) -> &[SeqKey] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// Shuffles sequences and splits them 80/10/10, the floor of each 10% share
/// going to validation and test and the remainder to training.
///
/// Each output list keeps the input order of its members.
pub fn split_corpus(sequence_ids: &[SeqKey], seed: u64) -> Result<SplitAssignment> {
    let n = sequence_ids.len();
    if n < 10 {
        return Err(Error::contract(format!(
            "need at least 10 sequences to split, got {n}"
        )));
    }
    let n_val = n / 10;
    let n_test = n / 10;
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);

    let pick = |range: std::ops::Range<usize>| {
        let mut idx = order[range].to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| sequence_ids[i].clone()).collect::<Vec<_>>()
    };
    Ok(SplitAssignment {
        train: pick(0..n_train),
        validation: pick(n_train..n_train + n_val),
        test: pick(n_train + n_val..n),
    })
}

/// Per-coordinate mean and standard deviation of contour frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourNormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ContourNormStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != CONTOUR_DIM || std.len() != CONTOUR_DIM {
            return Err(Error::contract(format!(
                "contour stats must have {CONTOUR_DIM} entries"
            )));
        }
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::contract("contour std must be positive"));
        }
        Ok(Self { mean, std })
    }
}

/// Population mean/std over every frame of the given sequences, per coordinate.
pub fn contour_norm_stats<'a, I>(sequences: I) -> Result<ContourNormStats>
where
    I: IntoIterator<Item = &'a ContourSequence>,
{
    // Welford accumulation
    let mut count = 0usize;
    let mut mean = vec![0.0; CONTOUR_DIM];
    let mut m2 = vec![0.0; CONTOUR_DIM];
    for seq in sequences {
        for frame in &seq.frames {
            count += 1;
            let n = count as f64;
            for (k, x) in frame.flat().into_iter().enumerate() {
                let delta = x - mean[k];
                mean[k] += delta / n;
                m2[k] += delta * (x - mean[k]);
            }
        }
    }
    if count < 2 {
        return Err(Error::contract(format!(
            "contour statistics need at least 2 frames, got {count}"
        )));
    }
    let std = m2
        .iter()
        .map(|s| (s / count as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(ContourNormStats { mean, std })
}

/// z-scores every coordinate, returning a `T × 800` matrix.
pub fn normalize_contours(seq: &ContourSequence, stats: &ContourNormStats) -> Array2<f64> {
    let mut out = Array2::zeros((seq.len(), CONTOUR_DIM));
    for (mut row, frame) in out.rows_mut().into_iter().zip(&seq.frames) {
        for (k, x) in frame.flat().into_iter().enumerate() {
            row[k] = (x - stats.mean[k]) / stats.std[k];
        }
    }
    out
}

/// Inverse of [`normalize_contours`].
pub fn denormalize_contours(
    z: &Array2<f64>,
    stats: &ContourNormStats,
    frame_rate_hz: f64,
) -> Result<ContourSequence> {
    if z.ncols() != CONTOUR_DIM {
        return Err(Error::contract(format!(
            "normalized contour matrix must be {CONTOUR_DIM} wide, got {}",
            z.ncols()
        )));
    }
    let frames = z
        .rows()
        .into_iter()
        .map(|row| {
            let coords: Vec<f64> = row
                .iter()
                .enumerate()
                .map(|(k, v)| v * stats.std[k] + stats.mean[k])
                .collect();
            FrameContours::from_flat(&coords)
        })
        .collect::<Result<Vec<_>>>()?;
    ContourSequence::new(frames, frame_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureKind;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn const_frame(v: f64) -> FrameContours {
        FrameContours::from_flat(&vec![v; CONTOUR_DIM]).unwrap()
    }

    fn random_frame(rng: &mut Rng) -> FrameContours {
        let coords: Vec<f64> = (0..CONTOUR_DIM).map(|_| rng.uniform() * 136.0).collect();
        FrameContours::from_flat(&coords).unwrap()
    }

    #[test]
    fn seq_key_parse() {
        let k: SeqKey = "s2/seq007".parse().unwrap();
        assert_eq!(k, SeqKey::new("s2", "seq007"));
        assert_eq!(k.to_string().parse::<SeqKey>().unwrap(), k);
        for bad in ["s2", "/x", "s2/", "a/b/c"] {
            assert!(bad.parse::<SeqKey>().is_err(), "{bad}");
        }
    }

    fn seq_of(frames: Vec<FrameContours>) -> ContourSequence {
        ContourSequence::new(frames, 50.0).unwrap()
    }

    fn ramp_features(n: usize) -> FeatureMatrix {
        FeatureMatrix::new(
            Array2::from_shape_fn((n, 2), |(t, j)| (t * 10 + j) as f64),
            FeatureKind::Mfcc39,
        )
        .unwrap()
    }

    #[test]
    fn silence_removal_by_midpoint() {
        let contours = seq_of((0..10).map(|t| const_frame(t as f64)).collect());
        let align = vec![
            AlignmentSegment::new(0.0, 0.1, "sil"),
            AlignmentSegment::new(0.1, 0.2, "a"),
        ];
        let (f, c, kept) =
            remove_silence(&ramp_features(10), &contours, &align, &default_silence_labels())
                .unwrap();
        assert_eq!(kept, vec![5, 6, 7, 8, 9]);
        assert_eq!(f.n_frames(), 5);
        assert_eq!(c.len(), 5);
        assert_eq!(f.data[[0, 0]], 50.0);
        assert_eq!(c.frames[0], const_frame(5.0));
    }

    #[test]
    fn silence_removal_identity_and_empty() {
        let contours = seq_of((0..10).map(|t| const_frame(t as f64)).collect());
        let feats = ramp_features(10);
        let all_a = vec![AlignmentSegment::new(0.0, 0.2, "a")];
        let (f, c, _) = remove_silence(&feats, &contours, &all_a, &BTreeSet::new()).unwrap();
        assert_eq!(f, feats);
        assert_eq!(c, contours);

        let (f, c, _) = remove_silence(&feats, &contours, &[], &default_silence_labels()).unwrap();
        assert_eq!(f.n_frames(), 0);
        assert!(c.is_empty());
    }

    #[test]
    fn silence_removal_length_mismatch() {
        let contours = seq_of(vec![const_frame(0.0); 3]);
        assert!(matches!(
            remove_silence(&ramp_features(4), &contours, &[], &BTreeSet::new()),
            Err(Error::Contract(_))
        ));
    }

    fn keys(n: usize) -> Vec<SeqKey> {
        (0..n).map(|i| SeqKey::new(format!("s{}", i % 5), format!("q{i:03}"))).collect()
    }

    #[test]
    fn split_sizes() {
        let s = split_corpus(&keys(10), 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
        let s = split_corpus(&keys(153), 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (123, 15, 15));
        assert!(split_corpus(&keys(9), 3).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let ids = keys(40);
        assert_eq!(split_corpus(&ids, 7).unwrap(), split_corpus(&ids, 7).unwrap());
        assert_ne!(split_corpus(&ids, 7).unwrap(), split_corpus(&ids, 8).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn split_partitions(n in 10usize..200, seed in any::<u64>()) {
            let ids = keys(n);
            let s = split_corpus(&ids, seed).unwrap();
            let mut all: Vec<SeqKey> = s.train.iter().chain(&s.validation).chain(&s.test).cloned().collect();
            all.sort();
            let mut expected = ids.clone();
            expected.sort();
            prop_assert_eq!(all, expected);
            prop_assert_eq!(s.validation.len(), n / 10);
            prop_assert_eq!(s.test.len(), n / 10);
        }

        #[test]
        fn normalize_round_trip(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let train = seq_of((0..5).map(|_| random_frame(&mut rng)).collect());
            let stats = contour_norm_stats([&train]).unwrap();
            let probe = seq_of(vec![random_frame(&mut rng)]);
            let back = denormalize_contours(&normalize_contours(&probe, &stats), &stats, 50.0).unwrap();
            for (p, q) in probe.frames[0].flat().iter().zip(back.frames[0].flat()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stats_zero_variance_floor() {
        let f = random_frame(&mut Rng::new(1));
        let stats = contour_norm_stats([&seq_of(vec![f.clone(), f.clone()])]).unwrap();
        assert_eq!(stats.mean, f.flat());
        assert!(stats.std.iter().all(|&s| s == STD_FLOOR));
    }

    #[test]
    fn stats_population_convention() {
        let s = seq_of(vec![const_frame(1.0), const_frame(3.0)]);
        let stats = contour_norm_stats([&s]).unwrap();
        assert!(stats.mean.iter().all(|&m| m == 2.0));
        assert!(stats.std.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        let mut rng = Rng::new(42);
        let a = seq_of((0..60).map(|_| random_frame(&mut rng)).collect());
        let b = seq_of((0..40).map(|_| random_frame(&mut rng)).collect());
        let stats = contour_norm_stats([&a, &b]).unwrap();

        let rows: Vec<Vec<f64>> = a.frames.iter().chain(&b.frames).map(|f| f.flat()).collect();
        let n = rows.len() as f64;
        for k in 0..CONTOUR_DIM {
            let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
            assert!((stats.mean[k] - mean).abs() < 1e-12);
            assert!((stats.std[k] - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn stats_need_two_frames() {
        assert!(contour_norm_stats(std::iter::empty()).is_err());
        assert!(contour_norm_stats([&seq_of(vec![const_frame(1.0)])]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let mut rng = Rng::new(2);
        let train = seq_of((0..4).map(|_| random_frame(&mut rng)).collect());
        let stats = contour_norm_stats([&train]).unwrap();
        let mean_frame = seq_of(vec![FrameContours::from_flat(&stats.mean).unwrap()]);
        assert!(normalize_contours(&mean_frame, &stats).iter().all(|&z| z == 0.0));

        let stats = ContourNormStats::new(vec![10.0; CONTOUR_DIM], vec![2.0; CONTOUR_DIM]).unwrap();
        let z = normalize_contours(&seq_of(vec![const_frame(14.0)]), &stats);
        assert!(z.iter().all(|&v| v == 2.0));

        assert!(denormalize_contours(&Array2::zeros((1, 799)), &stats, 50.0).is_err());
    }
}
