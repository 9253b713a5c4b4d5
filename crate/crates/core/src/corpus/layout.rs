//! On-disk corpus layout: `<root>/<session_id>/<seq_id>/` holding
//! `audio.wav`, `contours.csv`, `align_auto.tsv`, `align_expert.tsv`,
//! `meta.tsv` and an optional `w2v_logits.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;

use super::dataset::SeqKey;
use super::formats::*;
use super::types::*;
use crate::error::{Error, Result};
use crate::phonfeat::LOGITS_DIM;

pub const AUDIO_FILE: &str = "audio.wav";
pub const CONTOURS_FILE: &str = "contours.csv";
pub const ALIGN_AUTO_FILE: &str = "align_auto.tsv";
pub const ALIGN_EXPERT_FILE: &str = "align_expert.tsv";
pub const LOGITS_FILE: &str = "w2v_logits.csv";
pub const META_FILE: &str = "meta.tsv";

/// Everything recorded for one sentence-level sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub key: SeqKey,
    /// Mono samples at 16 kHz, scaled to `[-1, 1)`.
    pub audio: Vec<f64>,
    pub contours: ContourSequence,
    pub align_auto: Vec<AlignmentSegment>,
    pub align_expert: Vec<AlignmentSegment>,
    pub w2v_logits: Option<Array2<f64>>,
}

impl SequenceRecord {
    /// Checks cross-file consistency (audio duration, logits rows).
    pub fn validate(&self) -> Result<()> {
        let rate = self.contours.frame_rate_hz;
        let audio_s = self.audio.len() as f64 / AUDIO_SAMPLE_RATE_HZ as f64;
        let contour_s = self.contours.len() as f64 / rate;
        if (audio_s - contour_s).abs() > 1.0 / rate + 1e-9 {
            return Err(Error::contract(format!(
                "{}: audio lasts {audio_s:.3} s but contours cover {contour_s:.3} s",
                self.key
            )));
        }
        if let Some(l) = &self.w2v_logits {
            if l.nrows() != self.contours.len() || l.ncols() != LOGITS_DIM {
                return Err(Error::contract(format!(
                    "{}: logits are {}x{}, expected {}x{LOGITS_DIM}",
                    self.key,
                    l.nrows(),
                    l.ncols(),
                    self.contours.len()
                )));
            }
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Prefixes parse errors with the file they came from.
fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse {
            what: "file",
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

pub fn read_wav(path: &Path) -> Result<Vec<f64>> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1
        || spec.sample_rate != AUDIO_SAMPLE_RATE_HZ
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(Error::contract(format!(
            "{}: expected PCM16 mono {AUDIO_SAMPLE_RATE_HZ} Hz, got {spec:?}",
            path.display()
        )));
    }
    reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0).map_err(wav_err))
        .collect()
}

pub fn write_wav(path: &Path, samples: &[f64]) -> Result<()> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: AUDIO_SAMPLE_RATE_HZ,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in samples {
        let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(v).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

pub fn sequence_dir(root: &Path, key: &SeqKey) -> PathBuf {
    root.join(&key.session_id).join(&key.seq_id)
}

pub fn read_sequence(root: &Path, key: &SeqKey) -> Result<SequenceRecord> {
    let dir = sequence_dir(root, key);
    let meta_path = dir.join(META_FILE);
    let meta = in_file(&meta_path, parse_meta_tsv(&read_text(&meta_path)?))?;

    let contour_path = dir.join(CONTOURS_FILE);
    let mut contours = in_file(&contour_path, parse_contour_csv(&read_text(&contour_path)?))?;
    contours.frame_rate_hz = meta.frame_rate_hz;
    if contours.len() != meta.n_frames {
        return Err(Error::contract(format!(
            "{key}: meta says {} frames, contours have {}",
            meta.n_frames,
            contours.len()
        )));
    }

    let auto_path = dir.join(ALIGN_AUTO_FILE);
    let align_auto = in_file(&auto_path, parse_alignment_tsv(&read_text(&auto_path)?))?;
    let expert_path = dir.join(ALIGN_EXPERT_FILE);
    let align_expert = in_file(&expert_path, parse_alignment_tsv(&read_text(&expert_path)?))?;

    let logits_path = dir.join(LOGITS_FILE);
    let w2v_logits = if logits_path.exists() {
        Some(in_file(
            &logits_path,
            parse_matrix_csv(&read_text(&logits_path)?, Some(LOGITS_DIM)),
        )?)
    } else {
        None
    };

    let record = SequenceRecord {
        key: key.clone(),
        audio: read_wav(&dir.join(AUDIO_FILE))?,
        contours,
        align_auto,
        align_expert,
        w2v_logits,
    };
    record.validate()?;
    Ok(record)
}

pub fn write_sequence(root: &Path, record: &SequenceRecord) -> Result<()> {
    let dir = sequence_dir(root, &record.key);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_wav(&dir.join(AUDIO_FILE), &record.audio)?;
    write_text(&dir.join(CONTOURS_FILE), &write_contour_csv(&record.contours))?;
    write_text(&dir.join(ALIGN_AUTO_FILE), &write_alignment_tsv(&record.align_auto))?;
    write_text(&dir.join(ALIGN_EXPERT_FILE), &write_alignment_tsv(&record.align_expert))?;
    if let Some(l) = &record.w2v_logits {
        write_text(&dir.join(LOGITS_FILE), &write_matrix_csv(l))?;
    }
    let meta = SequenceMeta {
        frame_rate_hz: record.contours.frame_rate_hz,
        n_frames: record.contours.len(),
        extra: Default::default(),
    };
    write_text(&dir.join(META_FILE), &write_meta_tsv(&meta))
}

/// Lists `(session, seq)` directories in sorted order.
pub fn list_sequences(root: &Path) -> Result<Vec<SeqKey>> {
    let mut keys = Vec::new();
    for session in sorted_subdirs(root)? {
        for seq in sorted_subdirs(&root.join(&session))? {
            keys.push(SeqKey::new(session.clone(), seq));
        }
    }
    if keys.is_empty() {
        return Err(Error::contract(format!(
            "{}: no sequences found",
            root.display()
        )));
    }
    Ok(keys)
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// Loads every sequence under `root`, in sorted key order. Parsing runs on
/// the current rayon pool.
pub fn load_corpus(root: &Path) -> Result<Vec<SequenceRecord>> {
    let keys = list_sequences(root)?;
    keys.par_iter().map(|k| read_sequence(root, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> SequenceRecord {
        let frame = FrameContours::from_flat(&vec![3.5; CONTOUR_DIM]).unwrap();
        let contours = ContourSequence::new(vec![frame; 5], 50.0).unwrap();
        SequenceRecord {
            key: SeqKey::new("s1", "q000"),
            audio: (0..1600).map(|i| ((i % 64) as f64 - 32.0) / 64.0).collect(),
            contours,
            align_auto: vec![AlignmentSegment::new(0.0, 0.1, "a")],
            align_expert: vec![
                AlignmentSegment::new(0.0, 0.04, "sil"),
                AlignmentSegment::new(0.04, 0.1, "a"),
            ],
            w2v_logits: Some(Array2::from_elem((5, LOGITS_DIM), 0.25)),
        }
    }

    #[test]
    fn sequence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rec = record();
        write_sequence(dir.path(), &rec).unwrap();
        let keys = list_sequences(dir.path()).unwrap();
        assert_eq!(keys, vec![rec.key.clone()]);
        let back = read_sequence(dir.path(), &rec.key).unwrap();
        // samples are multiples of 1/64, exactly representable in PCM16
        assert_eq!(back, rec);
        assert_eq!(load_corpus(dir.path()).unwrap(), vec![rec]);
    }

    #[test]
    fn duration_mismatch_is_rejected() {
        let mut rec = record();
        rec.audio.truncate(800);
        assert!(rec.validate().is_err());
    }

    #[test]
    fn logits_shape_is_checked() {
        let mut rec = record();
        rec.w2v_logits = Some(Array2::zeros((4, LOGITS_DIM)));
        assert!(rec.validate().is_err());
    }
}
