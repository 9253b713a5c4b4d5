//! Deterministic synthetic corpus with a learnable phoneme → contour mapping,
//! and the constant-mean reference predictor.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::corpus::{
    segment_at, frame_midpoint_s, write_sequence, AlignmentSegment, ArticulatorId, ContourSequence,
    FrameContours, Point2D, SeqKey, SequenceRecord, AUDIO_SAMPLE_RATE_HZ, CONTOUR_DIM, POINTS_PER_CONTOUR,
};
use crate::error::{Error, Result};
use crate::phonfeat::LOGITS_DIM;
use crate::rng::Rng;

pub const SILENCE_LABEL: &str = "sil";

const PHONE_NAMES: [&str; 40] = [
    "a", "e", "i", "o", "u", "y", "m", "n", "p", "t", "k", "b", "d", "g", "f", "s", "v", "z", "l", "r",
    "w", "j", "h", "x", "E", "O", "S", "Z", "N", "R", "a~", "o~", "e~", "2", "9", "@", "t_cl", "k_cl",
    "p_cl", "H",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_sequences: usize,
    pub frames_per_sequence: usize,
    /// Number of labels including the silence label.
    pub inventory_size: usize,
    pub frame_rate_hz: f64,
    pub seed: u64,
    pub coarticulation_tau_s: f64,
    pub audio_noise_db: f64,
    pub logit_noise_std: f64,
    /// Sequences are dealt round-robin to sessions `s1`, `s2`, ...
    pub n_sessions: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_sequences: 40,
            frames_per_sequence: 120,
            inventory_size: 12,
            frame_rate_hz: 50.0,
            seed: 0,
            coarticulation_tau_s: 0.04,
            audio_noise_db: -30.0,
            logit_noise_std: 0.5,
            n_sessions: 5,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_sequences == 0 {
            return bad("n_sequences must be positive".into());
        }
        if self.frames_per_sequence < 20 {
            return bad(format!("frames_per_sequence must be at least 20, got {}", self.frames_per_sequence));
        }
        if self.inventory_size < 3 || self.inventory_size > LOGITS_DIM {
            return bad(format!("inventory_size must be in 3..={LOGITS_DIM}, got {}", self.inventory_size));
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return bad(format!("invalid frame rate {}", self.frame_rate_hz));
        }
        let spf = AUDIO_SAMPLE_RATE_HZ as f64 / self.frame_rate_hz;
        if spf.fract() != 0.0 {
            return bad(format!("frame rate {} does not divide the audio rate", self.frame_rate_hz));
        }
        if !(self.coarticulation_tau_s >= 0.0) || !(self.logit_noise_std >= 0.0) || !self.audio_noise_db.is_finite() {
            return bad("tau, logit noise and audio noise must be finite and non-negative (noise in dB)".into());
        }
        if self.n_sessions == 0 {
            return bad("n_sessions must be positive".into());
        }
        Ok(())
    }

    /// Labels with the silence label first, then the speech labels.
    pub fn labels(&self) -> Vec<String> {
        std::iter::once(SILENCE_LABEL.to_string())
            .chain((0..self.inventory_size - 1).map(|i| match PHONE_NAMES.get(i) {
                Some(n) => n.to_string(),
                None => format!("ph{i:02}"),
            }))
            .collect()
    }
}

/// Per-label contour prototypes and formant pairs shared by all sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneTable {
    pub labels: Vec<String>,
    pub prototypes: Vec<FrameContours>,
    /// Two frequencies in Hz per label; unused for silence.
    pub formants: Vec<(f64, f64)>,
}

impl PhoneTable {
    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Base arc per articulator: centre, radius, start and end angle (degrees),
/// deformation gain.
const BASE_ARCS: [(f64, f64, f64, f64, f64, f64); 8] = [
    (84.0, 104.0, 6.0, 180.0, 360.0, 0.5),  // arytenoid
    (80.0, 92.0, 9.0, 100.0, 230.0, 0.6),   // epiglottis
    (26.0, 86.0, 9.0, -90.0, 90.0, 1.0),    // lower_lip
    (90.0, 80.0, 28.0, -50.0, 50.0, 0.5),   // pharyngeal_wall
    (64.0, 52.0, 12.0, 20.0, 160.0, 1.0),   // velum
    (62.0, 72.0, 22.0, 190.0, 350.0, 1.4),  // tongue
    (26.0, 60.0, 9.0, -90.0, 90.0, 1.0),    // upper_lip
    (82.0, 112.0, 5.0, 0.0, 180.0, 0.5),    // vocal_folds
];

fn arc_points(art: usize, rest: bool, rng: &mut Rng) -> Vec<Point2D> {
    let (cx, cy, r, a0, a1, gain) = BASE_ARCS[art];
    let (dx, dy, m1, m2) = if rest {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        (
            rng.uniform_range(-2.0, 2.0),
            rng.uniform_range(-2.0, 2.0),
            gain * rng.uniform_range(-5.0, 5.0),
            gain * rng.uniform_range(-2.0, 2.0),
        )
    };
    (0..POINTS_PER_CONTOUR)
        .map(|k| {
            let s = k as f64 / (POINTS_PER_CONTOUR - 1) as f64;
            let ang = (a0 + (a1 - a0) * s).to_radians();
            let bump = m1 * (PI * s).sin() + m2 * (2.0 * PI * s).sin();
            Point2D::new(cx + dx + (r + bump) * ang.cos(), cy + dy + (r + bump) * ang.sin())
        })
        .collect()
}

/// Draws prototypes and formant pairs. Silence keeps the undeformed rest
/// shape.
pub fn phone_table(spec: &SynthSpec) -> Result<PhoneTable> {
    spec.validate()?;
    let mut rng = Rng::stream(spec.seed, 0);
    let labels = spec.labels();
    let mut prototypes = Vec::with_capacity(labels.len());
    let mut formants = Vec::with_capacity(labels.len());
    for (i, _) in labels.iter().enumerate() {
        let rest = i == 0;
        let mut pts = Vec::with_capacity(crate::corpus::POINTS_PER_FRAME);
        for art in 0..ArticulatorId::ALL.len() {
            pts.extend(arc_points(art, rest, &mut rng));
        }
        prototypes.push(FrameContours::new(pts)?);
        formants.push((rng.uniform_range(300.0, 1000.0), rng.uniform_range(1000.0, 3000.0)));
    }
    Ok(PhoneTable {
        labels,
        prototypes,
        formants,
    })
}

/// Random phone string with segment durations of 60–300 ms, opening and
/// closing with silence. Boundaries fall on whole milliseconds.
fn draw_segments(spec: &SynthSpec, table: &PhoneTable, rng: &mut Rng) -> Vec<AlignmentSegment> {
    let total_ms = (spec.frames_per_sequence as f64 / spec.frame_rate_hz * 1000.0).round() as i64;
    let dur = |rng: &mut Rng| 60 + rng.below(241) as i64;
    let n_speech = table.labels.len() as u64 - 1;
    let mut bounds: Vec<(i64, i64, usize)> = Vec::new();
    let first = dur(rng).min(total_ms - 100);
    bounds.push((0, first, 0));
    let mut t = first;
    let mut prev = 0;
    loop {
        let d = dur(rng);
        if t + d + 60 > total_ms {
            break;
        }
        let mut phone = 1 + rng.below(n_speech) as usize;
        if phone == prev && n_speech > 1 {
            phone = 1 + (phone % n_speech as usize);
        }
        bounds.push((t, t + d, phone));
        prev = phone;
        t += d;
    }
    let remaining = total_ms - t;
    if remaining > 300 {
        let mut phone = 1 + rng.below(n_speech) as usize;
        if phone == prev && n_speech > 1 {
            phone = 1 + (phone % n_speech as usize);
        }
        bounds.push((t, total_ms - 100, phone));
        t = total_ms - 100;
    }
    bounds.push((t, total_ms, 0));
    bounds
        .into_iter()
        .map(|(a, b, p)| AlignmentSegment::new(a as f64 / 1000.0, b as f64 / 1000.0, table.labels[p].clone()))
        .collect()
}

/// Moves every interior boundary by a whole number of ms in ±20 ms.
fn jitter(expert: &[AlignmentSegment], rng: &mut Rng) -> Vec<AlignmentSegment> {
    let mut bounds: Vec<i64> = expert.iter().map(|s| (s.start_s * 1000.0).round() as i64).collect();
    bounds.push((expert.last().expect("non-empty").end_s * 1000.0).round() as i64);
    let last = bounds.len() - 1;
    for b in &mut bounds[1..last] {
        *b += rng.below(41) as i64 - 20;
    }
    expert
        .iter()
        .enumerate()
        .map(|(i, s)| AlignmentSegment::new(bounds[i] as f64 / 1000.0, bounds[i + 1] as f64 / 1000.0, s.label.clone()))
        .collect()
}

/// First-order smoothing of per-frame prototypes with time constant `tau_s`.
pub fn smooth_contours(targets: &[&FrameContours], frame_rate_hz: f64, tau_s: f64) -> Result<Vec<FrameContours>> {
    let alpha = if tau_s == 0.0 {
        1.0
    } else {
        1.0 - (-(1.0 / frame_rate_hz) / tau_s).exp()
    };
    let mut out = Vec::with_capacity(targets.len());
    let mut state: Option<Vec<f64>> = None;
    for target in targets {
        let x = target.flat();
        let y = match &state {
            Some(prev) if alpha < 1.0 => prev.iter().zip(&x).map(|(p, t)| p + alpha * (t - p)).collect(),
            _ => x,
        };
        out.push(FrameContours::from_flat(&y)?);
        state = Some(y);
    }
    Ok(out)
}

fn synth_audio(
    spec: &SynthSpec,
    table: &PhoneTable,
    align: &[AlignmentSegment],
    rng: &mut Rng,
) -> Vec<f64> {
    let fs = AUDIO_SAMPLE_RATE_HZ as f64;
    let n = (spec.frames_per_sequence as f64 * fs / spec.frame_rate_hz).round() as usize;
    let (a1, a2) = (0.3, 0.2);
    let speech_rms = ((a1 * a1 + a2 * a2) / 2.0f64).sqrt();
    let noise_std = speech_rms * 10f64.powf(spec.audio_noise_db / 20.0);
    let (mut ph1, mut ph2) = (0.0f64, 0.0f64);
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let label = segment_at(align, t).map_or(SILENCE_LABEL, |s| s.label.as_str());
            let idx = table.index(label).unwrap_or(0);
            let mut v = noise_std * rng.gaussian();
            if idx != 0 {
                let (f1, f2) = table.formants[idx];
                v += a1 * ph1.sin() + a2 * ph2.sin();
                ph1 = (ph1 + 2.0 * PI * f1 / fs) % (2.0 * PI);
                ph2 = (ph2 + 2.0 * PI * f2 / fs) % (2.0 * PI);
            }
            v.clamp(-1.0, 32767.0 / 32768.0)
        })
        .collect()
}

fn synth_logits(
    spec: &SynthSpec,
    table: &PhoneTable,
    align: &[AlignmentSegment],
    rng: &mut Rng,
) -> Array2<f64> {
    let t_len = spec.frames_per_sequence;
    let mut logits = Array2::from_shape_simple_fn((t_len, LOGITS_DIM), || spec.logit_noise_std * rng.gaussian());
    for t in 0..t_len {
        let mid = frame_midpoint_s(t, spec.frame_rate_hz);
        let label = segment_at(align, mid).map_or(SILENCE_LABEL, |s| s.label.as_str());
        let idx = table.index(label).unwrap_or(0);
        logits[[t, idx]] += 6.0;
    }
    logits
}

pub fn sequence_key(spec: &SynthSpec, i: usize) -> SeqKey {
    SeqKey::new(format!("s{}", i % spec.n_sessions + 1), format!("seq{i:03}"))
}

/// Generates one sequence from its own random stream.
pub fn generate_sequence(spec: &SynthSpec, table: &PhoneTable, i: usize) -> Result<SequenceRecord> {
    let mut rng = Rng::stream(spec.seed, i as u64 + 1);
    let expert = draw_segments(spec, table, &mut rng);
    let auto = jitter(&expert, &mut rng);
    let targets: Vec<&FrameContours> = (0..spec.frames_per_sequence)
        .map(|t| {
            let mid = frame_midpoint_s(t, spec.frame_rate_hz);
            let label = segment_at(&expert, mid).map_or(SILENCE_LABEL, |s| s.label.as_str());
            &table.prototypes[table.index(label).unwrap_or(0)]
        })
        .collect();
    let frames = smooth_contours(&targets, spec.frame_rate_hz, spec.coarticulation_tau_s)?;
    let audio = synth_audio(spec, table, &expert, &mut rng);
    let logits = synth_logits(spec, table, &expert, &mut rng);
    let record = SequenceRecord {
        key: sequence_key(spec, i),
        audio,
        contours: ContourSequence::new(frames, spec.frame_rate_hz)?,
        align_auto: auto,
        align_expert: expert,
        w2v_logits: Some(logits),
    };
    record.validate()?;
    Ok(record)
}

/// All sequences, generated in parallel on independent streams.
pub fn generate_corpus(spec: &SynthSpec) -> Result<Vec<SequenceRecord>> {
    let table = phone_table(spec)?;
    (0..spec.n_sequences)
        .into_par_iter()
        .map(|i| generate_sequence(spec, &table, i))
        .collect()
}

/// Generates and writes the corpus under `root`.
pub fn write_corpus(root: &Path, spec: &SynthSpec) -> Result<Vec<SeqKey>> {
    let records = generate_corpus(spec)?;
    records.par_iter().try_for_each(|r| write_sequence(root, r))?;
    Ok(records.into_iter().map(|r| r.key).collect())
}

/// Predicts the mean training contour for every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantMeanPredictor {
    pub mean: Vec<f64>,
}

impl ConstantMeanPredictor {
    pub fn fit<'a, I>(train: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ContourSequence>,
    {
        let mut sum = vec![0.0; CONTOUR_DIM];
        let mut n = 0usize;
        for seq in train {
            for f in &seq.frames {
                for (s, v) in sum.iter_mut().zip(f.flat()) {
                    *s += v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::contract("constant-mean predictor needs training frames"));
        }
        Ok(Self {
            mean: sum.into_iter().map(|s| s / n as f64).collect(),
        })
    }

    /// One mean frame per feature row; the feature values are ignored.
    pub fn predict(&self, features: &Array2<f64>, frame_rate_hz: f64) -> Result<ContourSequence> {
        let frame = FrameContours::from_flat(&self.mean)?;
        ContourSequence::new(vec![frame; features.nrows()], frame_rate_hz)
    }
}
