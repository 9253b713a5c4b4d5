//! Phonetic input representations: phonemizer posteriors and one-hot
//! alignment encodings.

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};

use crate::corpus::{frame_midpoint_s, segment_at, AlignmentSegment, STD_FLOOR};
use crate::dsp::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

/// Width of the phonemizer's logit vectors.
pub const LOGITS_DIM: usize = 61;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}

/// How posterior features are standardized within a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SessionNormMode {
    /// One mean/std pooled over every entry.
    #[default]
    Scalar,
    /// Separate mean/std per phoneme column.
    PerDimension,
}

impl std::str::FromStr for SessionNormMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "scalar" => Ok(Self::Scalar),
            "per_dim" | "per-dim" => Ok(Self::PerDimension),
            _ => Err(format!("unknown session normalization `{s}` (scalar|per_dim)")),
        }
    }
}

impl SessionNormMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Scalar => "scalar",
            Self::PerDimension => "per_dim",
        }
    }
}

/// Standardization statistics for one recording session. In scalar mode both
/// vectors have length 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SessionStats {
    pub fn scalar(mean: f64, std: f64) -> Self {
        Self {
            mean: vec![mean],
            std: vec![std],
        }
    }

    /// Pools every posterior matrix of one session. Population std, floored.
    pub fn compute<'a, I>(posteriors: I, mode: SessionNormMode) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Array2<f64>>,
    {
        let mats: Vec<&Array2<f64>> = posteriors.into_iter().collect();
        let rows: usize = mats.iter().map(|m| m.nrows()).sum();
        if rows == 0 {
            return Err(Error::contract("session has no posterior frames"));
        }
        let width = mats[0].ncols();
        if mats.iter().any(|m| m.ncols() != width) {
            return Err(Error::contract("posterior widths differ within session"));
        }
        let stats = match mode {
            SessionNormMode::Scalar => {
                let n = (rows * width) as f64;
                let mean = mats.iter().map(|m| m.sum()).sum::<f64>() / n;
                let var = mats
                    .iter()
                    .map(|m| m.iter().map(|v| (v - mean).powi(2)).sum::<f64>())
                    .sum::<f64>()
                    / n;
                Self::scalar(mean, var.sqrt())
            }
            SessionNormMode::PerDimension => {
                let n = rows as f64;
                let mut mean = vec![0.0; width];
                for m in &mats {
                    for (acc, s) in mean.iter_mut().zip(m.sum_axis(Axis(0))) {
                        *acc += s;
                    }
                }
                mean.iter_mut().for_each(|v| *v /= n);
                let mut var = vec![0.0; width];
                for m in &mats {
                    for row in m.rows() {
                        for (j, v) in row.iter().enumerate() {
                            var[j] += (v - mean[j]).powi(2);
                        }
                    }
                }
                Self {
                    mean,
                    std: var.iter().map(|v| (v / n).sqrt()).collect(),
                }
            }
        };
        Ok(stats.floored())
    }

    fn floored(mut self) -> Self {
        for s in &mut self.std {
            if *s < STD_FLOOR {
                log::warn!("session posterior std {s:e} below floor, using {STD_FLOOR:e}");
                *s = STD_FLOOR;
            }
        }
        self
    }
}

/// `(p - mean) / std` elementwise with session statistics.
pub fn session_normalize(posteriors: &Array2<f64>, stats: &SessionStats) -> Result<FeatureMatrix> {
    let width = stats.mean.len();
    if width != 1 && width != posteriors.ncols() {
        return Err(Error::contract(format!(
            "session stats have {width} columns, posteriors have {}",
            posteriors.ncols()
        )));
    }
    let stats = stats.clone().floored();
    let mut data = posteriors.clone();
    for mut row in data.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            let k = if width == 1 { 0 } else { j };
            *v = (*v - stats.mean[k]) / stats.std[k];
        }
    }
    FeatureMatrix::new(data, FeatureKind::Posterior61)
}

/// Sorted set of non-silence phone labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneInventory {
    labels: Vec<String>,
}

impl PhoneInventory {
    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(Error::contract("phone inventory is empty"));
        }
        Ok(Self {
            labels: set.into_iter().collect(),
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    /// `inventory.txt` contents: one label per line.
    pub fn to_text(&self) -> String {
        let mut s = self.labels.join("\n");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let labels: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::parse("inventory", 0, "labels must be sorted and distinct"));
        }
        Self::from_labels(labels)
    }
}

/// Collects every non-silence label appearing in `alignments`.
pub fn build_inventory<'a, I>(alignments: I, silence_labels: &BTreeSet<String>) -> Result<PhoneInventory>
where
    I: IntoIterator<Item = &'a [AlignmentSegment]>,
{
    let labels: BTreeSet<&str> = alignments
        .into_iter()
        .flatten()
        .map(|s| s.label.as_str())
        .filter(|l| !silence_labels.contains(*l))
        .collect();
    PhoneInventory::from_labels(labels)
}

/// Encodes the label at each frame midpoint as a unit row. Silence and
/// uncovered frames become all-zero rows.
pub fn onehot_encode(
    align: &[AlignmentSegment],
    inv: &PhoneInventory,
    silence_labels: &BTreeSet<String>,
    frame_rate_hz: f64,
    n_frames: usize,
) -> Result<FeatureMatrix> {
    let mut data = Array2::zeros((n_frames, inv.len()));
    for t in 0..n_frames {
        let Some(seg) = segment_at(align, frame_midpoint_s(t, frame_rate_hz)) else {
            continue;
        };
        if silence_labels.contains(&seg.label) {
            continue;
        }
        let k = inv.index(&seg.label).ok_or_else(|| {
            Error::contract(format!("label `{}` is not in the phone inventory", seg.label))
        })?;
        data[[t, k]] = 1.0;
    }
    FeatureMatrix::new(data, FeatureKind::OneHot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::default_silence_labels;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn seg(a: f64, b: f64, l: &str) -> AlignmentSegment {
        AlignmentSegment::new(a, b, l)
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let p = softmax_rows(&Array2::zeros((2, LOGITS_DIM)));
        assert!(p.iter().all(|&v| (v - 1.0 / 61.0).abs() < 1e-15));

        let mut big = Array2::zeros((1, LOGITS_DIM));
        big[[0, 3]] = 1000.0;
        let p = softmax_rows(&big);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[[0, 3]] - 1.0).abs() < 1e-15);
        assert!(p.iter().enumerate().all(|(j, &v)| j == 3 || v < 1e-300));
    }

    #[test]
    fn softmax_matches_naive_oracle() {
        let mut rng = Rng::new(17);
        let x = Array2::from_shape_fn((5, LOGITS_DIM), |_| rng.uniform_range(-3.0, 3.0));
        let p = softmax_rows(&x);
        for (row, prow) in x.rows().into_iter().zip(p.rows()) {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            for (v, q) in row.iter().zip(prow.iter()) {
                assert!((v.exp() / z - q).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn softmax_rows_sum_to_one(seed in any::<u64>(), shift in -50.0f64..50.0) {
            let mut rng = Rng::new(seed);
            let x = Array2::from_shape_fn((3, LOGITS_DIM), |_| rng.gaussian() * 5.0);
            let p = softmax_rows(&x);
            for row in p.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
            }
            let q = softmax_rows(&(&x + shift));
            for (a, b) in p.iter().zip(q.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn onehot_decodes_back(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let labels = ["a", "e", "sil", "t"];
            let mut t = 0.0;
            let mut align = Vec::new();
            while t < 1.0 {
                let d = rng.uniform_range(0.03, 0.2);
                let l = labels[rng.below(4) as usize];
                align.push(seg(t, t + d, l));
                t += d;
            }
            let sil = default_silence_labels();
            let inv = build_inventory([align.as_slice()], &sil).unwrap();
            let m = onehot_encode(&align, &inv, &sil, 50.0, 50).unwrap();
            for (f, row) in m.data.rows().into_iter().enumerate() {
                let s = segment_at(&align, frame_midpoint_s(f, 50.0)).unwrap();
                let total = row.sum();
                if sil.contains(&s.label) {
                    prop_assert_eq!(total, 0.0);
                } else {
                    prop_assert_eq!(total, 1.0);
                    let k = row.iter().position(|&v| v == 1.0).unwrap();
                    prop_assert_eq!(&inv.labels()[k], &s.label);
                }
            }
        }
    }

    #[test]
    fn session_normalization_examples() {
        let uniform = Array2::from_elem((4, LOGITS_DIM), 1.0 / 61.0);
        let z = session_normalize(&uniform, &SessionStats::scalar(1.0 / 61.0, 0.3)).unwrap();
        assert!(z.data.iter().all(|&v| v == 0.0));
        assert_eq!(z.kind, FeatureKind::Posterior61);

        let mut rng = Rng::new(1);
        let p = softmax_rows(&Array2::from_shape_fn((6, LOGITS_DIM), |_| rng.gaussian()));
        assert_eq!(session_normalize(&p, &SessionStats::scalar(0.0, 1.0)).unwrap().data, p);
    }

    #[test]
    fn session_pooled_statistics() {
        let mut rng = Rng::new(23);
        let mats: Vec<Array2<f64>> = (0..3)
            .map(|i| softmax_rows(&Array2::from_shape_fn((10 + i * 7, LOGITS_DIM), |_| rng.gaussian() * 2.0)))
            .collect();
        for mode in [SessionNormMode::Scalar, SessionNormMode::PerDimension] {
            let stats = SessionStats::compute(mats.iter(), mode).unwrap();
            let normed: Vec<f64> = mats
                .iter()
                .flat_map(|m| session_normalize(m, &stats).unwrap().data.into_iter())
                .collect();
            let n = normed.len() as f64;
            let mean = normed.iter().sum::<f64>() / n;
            let std = (normed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-10, "{mode:?}");
            if mode == SessionNormMode::Scalar {
                assert!((std - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constant_session_is_floored() {
        let flat = Array2::from_elem((3, LOGITS_DIM), 0.5);
        let stats = SessionStats::compute([&flat], SessionNormMode::Scalar).unwrap();
        assert_eq!(stats.std, vec![STD_FLOOR]);
    }

    #[test]
    fn inventory_examples() {
        let sil = default_silence_labels();
        let a = vec![seg(0.0, 0.1, "t"), seg(0.1, 0.2, "a"), seg(0.2, 0.3, "sil")];
        assert_eq!(build_inventory([a.as_slice()], &sil).unwrap().labels(), ["a", "t"]);

        let b = vec![seg(0.0, 0.1, "a"), seg(0.1, 0.2, "a"), seg(0.2, 0.3, "t")];
        assert_eq!(build_inventory([b.as_slice()], &sil).unwrap().labels(), ["a", "t"]);

        // closure and burst of a plosive are distinct phones
        let c = vec![seg(0.0, 0.05, "t_cl"), seg(0.05, 0.08, "t"), seg(0.08, 0.2, "a")];
        assert_eq!(build_inventory([c.as_slice()], &sil).unwrap().labels(), ["a", "t", "t_cl"]);

        let only_sil = vec![seg(0.0, 0.1, "sil")];
        assert!(build_inventory([only_sil.as_slice()], &sil).is_err());

        // order independence and idempotence
        let x = build_inventory([a.as_slice(), c.as_slice()], &sil).unwrap();
        let y = build_inventory([c.as_slice(), a.as_slice()], &sil).unwrap();
        assert_eq!(x, y);
        assert_eq!(PhoneInventory::parse(&x.to_text()).unwrap(), x);
    }

    #[test]
    fn onehot_examples() {
        let sil = default_silence_labels();
        let inv = PhoneInventory::from_labels(["a", "t"]).unwrap();
        let m = onehot_encode(&[seg(0.0, 0.1, "a")], &inv, &sil, 50.0, 5).unwrap();
        for row in m.data.rows() {
            assert_eq!(row.to_vec(), vec![1.0, 0.0]);
        }

        let m = onehot_encode(&[seg(0.0, 0.05, "a"), seg(0.05, 0.1, "t")], &inv, &sil, 50.0, 5)
            .unwrap();
        let labels: Vec<usize> = m
            .data
            .rows()
            .into_iter()
            .map(|r| r.iter().position(|&v| v == 1.0).unwrap())
            .collect();
        assert_eq!(labels, vec![0, 0, 1, 1, 1]);

        let m = onehot_encode(&[seg(0.0, 0.02, "a")], &inv, &sil, 50.0, 2).unwrap();
        assert_eq!(m.data.row(1).sum(), 0.0);

        let err = onehot_encode(&[seg(0.0, 0.1, "zz")], &inv, &sil, 50.0, 2).unwrap_err();
        assert!(err.to_string().contains("zz"));
    }
}
