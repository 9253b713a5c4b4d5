//! Frame-synchronous input features and the MFCC front-end.

mod mfcc;

pub use mfcc::*;

use std::fmt;

use ndarray::{Array1, Array2, Axis};

use crate::corpus::STD_FLOOR;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Static cepstra only (intermediate, before deltas).
    Mfcc13,
    Mfcc39,
    Posterior61,
    OneHot,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mfcc13 => "mfcc13",
            FeatureKind::Mfcc39 => "mfcc39",
            FeatureKind::Posterior61 => "posterior61",
            FeatureKind::OneHot => "onehot",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `T × D` per-frame input features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Array2<f64>,
    pub kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>, kind: FeatureKind) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!("non-finite entry in {kind} features")));
        }
        Ok(Self { data, kind })
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

/// Per-column standardization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormStats {
    /// Population mean/std pooled over all rows of `matrices`.
    pub fn fit<'a, I>(matrices: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Array2<f64>>,
    {
        let mut dim = None;
        let mut count = 0usize;
        let mut sum: Array1<f64> = Array1::zeros(0);
        let mut rows: Vec<&Array2<f64>> = Vec::new();
        for m in matrices {
            match dim {
                None => {
                    dim = Some(m.ncols());
                    sum = Array1::zeros(m.ncols());
                }
                Some(d) if d != m.ncols() => {
                    return Err(Error::contract(format!(
                        "feature widths differ: {d} vs {}",
                        m.ncols()
                    )));
                }
                _ => {}
            }
            count += m.nrows();
            sum += &m.sum_axis(Axis(0));
            rows.push(m);
        }
        if count == 0 {
            return Err(Error::contract("feature statistics need at least one frame"));
        }
        let mean = sum / count as f64;
        let mut sq: Array1<f64> = Array1::zeros(mean.len());
        for m in rows {
            for row in m.rows() {
                sq.zip_mut_with(&(&row - &mean), |acc, d| *acc += d * d);
            }
        }
        let std = sq.mapv(|s| (s / count as f64).sqrt().max(STD_FLOOR));
        Ok(Self {
            mean: mean.to_vec(),
            std: std.to_vec(),
        })
    }
}

/// Column-wise `(x - mean) / std`; the feature kind is preserved.
pub fn feature_zscore(features: &FeatureMatrix, stats: &FeatureNormStats) -> Result<FeatureMatrix> {
    if stats.mean.len() != features.dim() || stats.std.len() != features.dim() {
        return Err(Error::contract(format!(
            "stats have {} columns, features have {}",
            stats.mean.len(),
            features.dim()
        )));
    }
    let mut data = features.data.clone();
    for mut row in data.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - stats.mean[j]) / stats.std[j];
        }
    }
    Ok(FeatureMatrix {
        data,
        kind: features.kind,
    })
}
