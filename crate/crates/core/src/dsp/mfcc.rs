//! MFCC extraction locked to the contour frame rate.
//!
//! Pipeline per frame: pre-emphasis, Hamming window, power spectrum, mel
//! filterbank, log with floor, orthonormal DCT-II, first `n_ceps` coefficients.
//! Frame `t` is centred on `(t + 0.5) * hop_s`; audio outside the signal is
//! treated as zeros, so the output always has exactly the requested number of
//! rows.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array1, Array2};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub sample_rate_hz: f64,
    pub window_s: f64,
    pub hop_s: f64,
    pub fft_size: usize,
    pub n_mel_filters: usize,
    pub n_ceps: usize,
    pub preemphasis: f64,
    pub mel_fmin_hz: f64,
    pub mel_fmax_hz: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000.0,
            window_s: 0.025,
            hop_s: 0.020,
            fft_size: 512,
            n_mel_filters: 26,
            n_ceps: 13,
            preemphasis: 0.97,
            mel_fmin_hz: 0.0,
            mel_fmax_hz: 8_000.0,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn window_samples(&self) -> usize {
        (self.window_s * self.sample_rate_hz).round() as usize
    }

    pub fn hop_samples(&self) -> f64 {
        self.hop_s * self.sample_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate_hz / 2.0;
        if self.mel_fmax_hz > nyquist {
            return Err(Error::Config(format!(
                "mel_fmax_hz {} exceeds Nyquist {nyquist}",
                self.mel_fmax_hz
            )));
        }
        if !(0.0..self.mel_fmax_hz).contains(&self.mel_fmin_hz) {
            return Err(Error::Config("mel_fmin_hz must lie in [0, mel_fmax_hz)".into()));
        }
        if self.window_samples() == 0 || self.fft_size < self.window_samples() {
            return Err(Error::Config(format!(
                "fft_size {} smaller than window of {} samples",
                self.fft_size,
                self.window_samples()
            )));
        }
        if self.n_ceps == 0 || self.n_ceps > self.n_mel_filters {
            return Err(Error::Config("need 0 < n_ceps <= n_mel_filters".into()));
        }
        if !(self.hop_s > 0.0) || !(self.log_floor > 0.0) {
            return Err(Error::Config("hop_s and log_floor must be positive".into()));
        }
        Ok(())
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Centre frequencies (Hz) of the mel filters.
pub fn mel_filter_centers(cfg: &MfccConfig) -> Vec<f64> {
    mel_edges(cfg)[1..=cfg.n_mel_filters].to_vec()
}

fn mel_edges(cfg: &MfccConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.mel_fmin_hz);
    let hi = hz_to_mel(cfg.mel_fmax_hz);
    let n = cfg.n_mel_filters + 1;
    (0..=n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64))
        .collect()
}

/// Triangular filters, `n_mel × (fft_size/2 + 1)`, peak height 1.
pub fn build_mel_filterbank(cfg: &MfccConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let edges = mel_edges(cfg);
    let n_bins = cfg.fft_size / 2 + 1;
    let bin_hz = cfg.sample_rate_hz / cfg.fft_size as f64;
    Ok(Array2::from_shape_fn((cfg.n_mel_filters, n_bins), |(m, k)| {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        let f = k as f64 * bin_hz;
        if f >= l && f <= c {
            (f - l) / (c - l)
        } else if f > c && f <= r {
            (r - f) / (r - c)
        } else {
            0.0
        }
    }))
}

/// Orthonormal DCT-II basis; row `k` holds coefficient `k`.
pub fn dct_ii_matrix(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(k, i)| {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
    })
}

/// Reusable extractor holding the filterbank, window, DCT basis and FFT plan.
pub struct MfccExtractor {
    cfg: MfccConfig,
    filterbank: Array2<f64>,
    window: Vec<f64>,
    dct: Array2<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: MfccConfig) -> Result<Self> {
        let filterbank = build_mel_filterbank(&cfg)?;
        let n = cfg.window_samples();
        let window = (0..n)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1).max(1) as f64).cos())
            .collect();
        let dct = dct_ii_matrix(cfg.n_mel_filters)
            .slice(s![..cfg.n_ceps, ..])
            .to_owned();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg,
            filterbank,
            window,
            dct,
            fft,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    /// Log mel energies, one row per frame (before the DCT).
    pub fn log_mel_energies(&self, audio: &[f64], n_frames: usize) -> Result<Array2<f64>> {
        if audio.is_empty() {
            return Err(Error::contract("cannot extract MFCCs from empty audio"));
        }
        let cfg = &self.cfg;
        let emphasized: Vec<f64> = (0..audio.len())
            .map(|i| {
                let prev = if i == 0 { 0.0 } else { audio[i - 1] };
                audio[i] - cfg.preemphasis * prev
            })
            .collect();

        let win = self.window.len();
        let hop = cfg.hop_samples();
        let n_bins = cfg.fft_size / 2 + 1;
        let mut out = Array2::zeros((n_frames, cfg.n_mel_filters));
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
        let mut power = Array1::zeros(n_bins);
        for t in 0..n_frames {
            let center = ((t as f64 + 0.5) * hop).round() as isize;
            let start = center - (win / 2) as isize;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (n, w) in self.window.iter().enumerate() {
                let idx = start + n as isize;
                if idx >= 0 && (idx as usize) < emphasized.len() {
                    buf[n].re = emphasized[idx as usize] * w;
                }
            }
            self.fft.process(&mut buf);
            for (k, p) in power.iter_mut().enumerate() {
                *p = buf[k].norm_sqr();
            }
            let mel = self.filterbank.dot(&power);
            for (m, e) in mel.iter().enumerate() {
                out[[t, m]] = e.max(cfg.log_floor).ln();
            }
        }
        Ok(out)
    }

    /// `n_frames × n_ceps` cepstra.
    pub fn extract(&self, audio: &[f64], n_frames: usize) -> Result<FeatureMatrix> {
        let log_mel = self.log_mel_energies(audio, n_frames)?;
        FeatureMatrix::new(log_mel.dot(&self.dct.t()), FeatureKind::Mfcc13)
    }
}

/// One-shot MFCC extraction; see [`MfccExtractor`].
pub fn extract_mfcc(audio: &[f64], cfg: &MfccConfig, n_frames: usize) -> Result<FeatureMatrix> {
    MfccExtractor::new(cfg.clone())?.extract(audio, n_frames)
}

const DELTA_WINDOW: usize = 2;

/// Regression deltas over a ±2 frame window with edge replication.
pub fn deltas(c: &Array2<f64>) -> Array2<f64> {
    let t_len = c.nrows();
    let denom = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    let clamp = |i: isize| i.clamp(0, t_len as isize - 1) as usize;
    let mut out = Array2::zeros(c.raw_dim());
    for t in 0..t_len {
        for n in 1..=DELTA_WINDOW {
            let ahead = c.row(clamp(t as isize + n as isize));
            let behind = c.row(clamp(t as isize - n as isize));
            let mut row = out.row_mut(t);
            for j in 0..c.ncols() {
                row[j] += n as f64 * (ahead[j] - behind[j]);
            }
        }
    }
    out / denom
}

/// Appends delta and delta-delta columns: `[base | delta | delta-delta]`.
pub fn add_deltas(base: &FeatureMatrix) -> Result<FeatureMatrix> {
    let d1 = deltas(&base.data);
    let d2 = deltas(&d1);
    let data = ndarray::concatenate(
        ndarray::Axis(1),
        &[base.data.view(), d1.view(), d2.view()],
    )
    .map_err(|e| Error::contract(e.to_string()))?;
    FeatureMatrix::new(data, FeatureKind::Mfcc39)
}

/// Full 39-dimensional front-end: cepstra plus deltas.
pub fn mfcc39(extractor: &MfccExtractor, audio: &[f64], n_frames: usize) -> Result<FeatureMatrix> {
    add_deltas(&extractor.extract(audio, n_frames)?)
}
