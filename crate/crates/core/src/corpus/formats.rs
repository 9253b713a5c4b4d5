//! Text formats: contour CSV, alignment TSV, `meta.tsv`, and numeric matrix CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::Array2;

use super::types::*;
use crate::error::{Error, Result};
use crate::numfmt::{fmt_g17, join_g17};

pub const CONTOUR_CSV_HEADER: &str = "frame,articulator,point,x_px,y_px";

/// Parses a contour CSV. The result carries the default 50 Hz frame rate;
/// corpus loading overrides it from `meta.tsv`.
pub fn parse_contour_csv(text: &str) -> Result<ContourSequence> {
    const WHAT: &str = "contour csv";
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.trim_end() == CONTOUR_CSV_HEADER => {}
        Some((n, h)) => {
            return Err(Error::parse(WHAT, n, format!("bad header `{h}`")));
        }
        None => return Err(Error::parse(WHAT, 1, "empty file")),
    }

    let mut frames = Vec::new();
    let mut current: Vec<Point2D> = Vec::with_capacity(POINTS_PER_FRAME);
    let mut last_line = 1;
    for (line_no, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        last_line = line_no;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                WHAT,
                line_no,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let frame: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(WHAT, line_no, format!("bad frame index `{}`", fields[0])))?;
        let art: ArticulatorId = fields[1]
            .parse()
            .map_err(|e: String| Error::parse(WHAT, line_no, e))?;
        let point: usize = fields[2]
            .parse()
            .map_err(|_| Error::parse(WHAT, line_no, format!("bad point index `{}`", fields[2])))?;
        let x = parse_finite(fields[3]).ok_or_else(|| Error::parse(WHAT, line_no, "bad x_px"))?;
        let y = parse_finite(fields[4]).ok_or_else(|| Error::parse(WHAT, line_no, "bad y_px"))?;

        let expected_frame = frames.len();
        if frame != expected_frame {
            let msg = if current.is_empty() {
                format!("non-contiguous frame index {frame}, expected {expected_frame}")
            } else {
                format!("frame {expected_frame} incomplete")
            };
            return Err(Error::parse(WHAT, line_no, msg));
        }
        let pos = current.len();
        let expected_art = ArticulatorId::ALL[pos / POINTS_PER_CONTOUR];
        let expected_point = pos % POINTS_PER_CONTOUR;
        if art != expected_art || point != expected_point {
            return Err(Error::parse(
                WHAT,
                line_no,
                format!(
                    "missing point: expected {expected_art} point {expected_point} of frame {frame}, found {art} point {point}"
                ),
            ));
        }
        current.push(Point2D::new(x, y));
        if current.len() == POINTS_PER_FRAME {
            frames.push(FrameContours::new(std::mem::take(&mut current))?);
        }
    }
    if !current.is_empty() {
        return Err(Error::parse(
            WHAT,
            last_line,
            format!("frame {} incomplete", frames.len()),
        ));
    }
    if frames.is_empty() {
        return Err(Error::parse(WHAT, last_line, "no frames"));
    }
    ContourSequence::new(frames, DEFAULT_FRAME_RATE_HZ)
}

/// Writes a contour CSV; floats use 17 significant digits.
pub fn write_contour_csv(seq: &ContourSequence) -> String {
    let mut out = String::with_capacity(seq.len() * POINTS_PER_FRAME * 40);
    out.push_str(CONTOUR_CSV_HEADER);
    out.push('\n');
    for (f, frame) in seq.frames.iter().enumerate() {
        for art in ArticulatorId::ALL {
            for (k, p) in frame.articulator(art).iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{f},{art},{k},{},{}",
                    fmt_g17(p.x_px),
                    fmt_g17(p.y_px)
                );
            }
        }
    }
    out
}

/// Parses `start_s<TAB>end_s<TAB>label` lines; `#` lines are comments.
pub fn parse_alignment_tsv(text: &str) -> Result<Vec<AlignmentSegment>> {
    const WHAT: &str = "alignment tsv";
    let mut segments: Vec<AlignmentSegment> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                WHAT,
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let start = parse_finite(fields[0].trim())
            .ok_or_else(|| Error::parse(WHAT, line_no, format!("malformed start `{}`", fields[0])))?;
        let end = parse_finite(fields[1].trim())
            .ok_or_else(|| Error::parse(WHAT, line_no, format!("malformed end `{}`", fields[1])))?;
        let label = fields[2].trim();
        if label.is_empty() {
            return Err(Error::parse(WHAT, line_no, "empty label"));
        }
        if start < 0.0 {
            return Err(Error::parse(WHAT, line_no, "negative start time"));
        }
        if end <= start {
            return Err(Error::parse(WHAT, line_no, format!("end {end} <= start {start}")));
        }
        if let Some(prev) = segments.last() {
            if start < prev.end_s {
                return Err(Error::parse(
                    WHAT,
                    line_no,
                    format!("segment overlaps previous one ending at {}", prev.end_s),
                ));
            }
        }
        segments.push(AlignmentSegment::new(start, end, label));
    }
    Ok(segments)
}

pub fn write_alignment_tsv(segments: &[AlignmentSegment]) -> String {
    let mut out = String::new();
    for s in segments {
        let _ = writeln!(out, "{}\t{}\t{}", fmt_g17(s.start_s), fmt_g17(s.end_s), s.label);
    }
    out
}

/// Contents of a sequence's `meta.tsv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMeta {
    pub frame_rate_hz: f64,
    pub n_frames: usize,
    /// Keys other than the two required ones, preserved in sorted order.
    pub extra: BTreeMap<String, String>,
}

pub fn parse_meta_tsv(text: &str) -> Result<SequenceMeta> {
    const WHAT: &str = "meta tsv";
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(WHAT, i + 1, "expected key<TAB>value"))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    let frame_rate_hz = map
        .remove("frame_rate_hz")
        .ok_or_else(|| Error::parse(WHAT, 0, "missing key frame_rate_hz"))?
        .parse::<f64>()
        .ok()
        .filter(|r| *r > 0.0 && r.is_finite())
        .ok_or_else(|| Error::parse(WHAT, 0, "bad frame_rate_hz"))?;
    let n_frames = map
        .remove("n_frames")
        .ok_or_else(|| Error::parse(WHAT, 0, "missing key n_frames"))?
        .parse::<usize>()
        .map_err(|_| Error::parse(WHAT, 0, "bad n_frames"))?;
    Ok(SequenceMeta {
        frame_rate_hz,
        n_frames,
        extra: map,
    })
}

pub fn write_meta_tsv(meta: &SequenceMeta) -> String {
    let mut out = format!(
        "frame_rate_hz\t{}\nn_frames\t{}\n",
        fmt_g17(meta.frame_rate_hz),
        meta.n_frames
    );
    for (k, v) in &meta.extra {
        let _ = writeln!(out, "{k}\t{v}");
    }
    out
}

/// Parses a headerless CSV of decimals into a matrix. When `expected_cols`
/// is given, every row must have exactly that many columns.
pub fn parse_matrix_csv(text: &str, expected_cols: Option<usize>) -> Result<Array2<f64>> {
    const WHAT: &str = "matrix csv";
    let mut data = Vec::new();
    let mut cols: Option<usize> = expected_cols;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v = parse_finite(field.trim()).ok_or_else(|| {
                Error::parse(WHAT, i + 1, format!("malformed number `{field}`"))
            })?;
            data.push(v);
        }
        let n = data.len() - before;
        match cols {
            Some(c) if c != n => {
                return Err(Error::parse(
                    WHAT,
                    i + 1,
                    format!("expected {c} columns, found {n}"),
                ));
            }
            None => cols = Some(n),
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::contract(e.to_string()))
}

pub fn write_matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        out.push_str(&join_g17(row.iter().copied(), ","));
        out.push('\n');
    }
    out
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn frame_rows(frame: usize, f: impl Fn(usize, usize) -> (f64, f64)) -> String {
        let mut s = String::new();
        for (a, art) in ArticulatorId::ALL.iter().enumerate() {
            for k in 0..POINTS_PER_CONTOUR {
                let (x, y) = f(a, k);
                s.push_str(&format!("{frame},{art},{k},{x},{y}\n"));
            }
        }
        s
    }

    fn random_seq(rng: &mut Rng, n: usize) -> ContourSequence {
        let frames = (0..n)
            .map(|_| {
                let pts = (0..POINTS_PER_FRAME)
                    .map(|_| Point2D::new(rng.uniform() * 136.0, rng.uniform() * 136.0))
                    .collect();
                FrameContours::new(pts).unwrap()
            })
            .collect();
        ContourSequence::new(frames, 50.0).unwrap()
    }

    #[test]
    fn single_complete_frame() {
        let text = format!("{CONTOUR_CSV_HEADER}\n{}", frame_rows(0, |a, k| (a as f64, k as f64)));
        assert_eq!(text.lines().count(), 401);
        let seq = parse_contour_csv(&text).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.frames[0].points().len(), 400);
    }

    #[test]
    fn field_mapping() {
        let text = format!(
            "{CONTOUR_CSV_HEADER}\n{}",
            frame_rows(0, |a, k| if a == 5 && k == 12 { (55.25, 80.5) } else { (1.0, 2.0) })
        );
        assert!(text.contains("0,tongue,12,55.25,80.5\n"));
        let seq = parse_contour_csv(&text).unwrap();
        assert_eq!(
            seq.frames[0].point(ArticulatorId::Tongue, 12),
            Point2D::new(55.25, 80.5)
        );
    }

    #[test]
    fn incomplete_frame_is_reported() {
        let rows = frame_rows(0, |_, _| (1.0, 1.0));
        let truncated: Vec<&str> = rows.lines().take(399).collect();
        let text = format!("{CONTOUR_CSV_HEADER}\n{}\n", truncated.join("\n"));
        let err = parse_contour_csv(&text).unwrap_err().to_string();
        assert!(err.contains("frame 0 incomplete"), "{err}");
    }

    #[test]
    fn missing_point_names_row() {
        let rows = frame_rows(0, |_, _| (1.0, 1.0));
        let kept: Vec<&str> = rows
            .lines()
            .enumerate()
            .filter(|(i, _)| *i != 10)
            .map(|(_, l)| l)
            .collect();
        let text = format!("{CONTOUR_CSV_HEADER}\n{}\n", kept.join("\n"));
        match parse_contour_csv(&text).unwrap_err() {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 12);
                assert!(msg.contains("missing point"), "{msg}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_articulator_and_gap() {
        let text = format!("{CONTOUR_CSV_HEADER}\n0,jaw,0,1,1\n");
        assert!(parse_contour_csv(&text).unwrap_err().to_string().contains("jaw"));

        let text = format!(
            "{CONTOUR_CSV_HEADER}\n{}{}",
            frame_rows(0, |_, _| (1.0, 1.0)),
            frame_rows(2, |_, _| (1.0, 1.0))
        );
        let err = parse_contour_csv(&text).unwrap_err().to_string();
        assert!(err.contains("non-contiguous"), "{err}");
        assert!(err.contains("line 402"), "{err}");
    }

    #[test]
    fn writer_row_count_and_digits() {
        let mut pts = vec![Point2D::new(1.0, 1.0); POINTS_PER_FRAME];
        pts[0] = Point2D::new(0.1, 0.2);
        let seq = ContourSequence::new(vec![FrameContours::new(pts).unwrap()], 50.0).unwrap();
        let text = write_contour_csv(&seq);
        assert_eq!(text.lines().count(), 401);
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "0,arytenoid,0,0.10000000000000001,0.20000000000000001"
        );
    }

    #[test]
    fn random_three_frame_round_trip() {
        let seq = random_seq(&mut Rng::new(9), 3);
        let back = parse_contour_csv(&write_contour_csv(&seq)).unwrap();
        for (a, b) in seq.frames.iter().zip(&back.frames) {
            for (p, q) in a.points().iter().zip(b.points()) {
                assert_eq!(p.x_px.to_bits(), q.x_px.to_bits());
                assert_eq!(p.y_px.to_bits(), q.y_px.to_bits());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn contour_csv_round_trip(seed in any::<u64>(), n in 1usize..4) {
            let seq = random_seq(&mut Rng::new(seed), n);
            prop_assert_eq!(parse_contour_csv(&write_contour_csv(&seq)).unwrap(), seq);
        }
    }

    #[test]
    fn alignment_examples() {
        let segs = parse_alignment_tsv("0.00\t0.35\ta\n").unwrap();
        assert_eq!(segs, vec![AlignmentSegment::new(0.0, 0.35, "a")]);

        let segs = parse_alignment_tsv("# comment\n0\t0.1\tsil\n0.1\t0.3\tt\n").unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].label, "t");

        match parse_alignment_tsv("0\t0.2\ta\n0.1\t0.3\tt\n").unwrap_err() {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("overlap"));
            }
            e => panic!("unexpected {e}"),
        }
        assert!(parse_alignment_tsv("0.3\t0.2\ta\n").is_err());
        assert!(parse_alignment_tsv("0.x\t0.2\ta\n").is_err());
        assert!(parse_alignment_tsv("0.1\t0.1\ta\n").is_err());
    }

    #[test]
    fn alignment_round_trip() {
        let segs = vec![
            AlignmentSegment::new(0.0, 0.1, "sil"),
            AlignmentSegment::new(0.1, 0.37, "t_cl"),
        ];
        assert_eq!(parse_alignment_tsv(&write_alignment_tsv(&segs)).unwrap(), segs);
    }

    #[test]
    fn meta_requires_keys() {
        let meta = parse_meta_tsv("frame_rate_hz\t50\nn_frames\t120\nspeaker\tF1\n").unwrap();
        assert_eq!(meta.frame_rate_hz, 50.0);
        assert_eq!(meta.n_frames, 120);
        assert_eq!(meta.extra["speaker"], "F1");
        assert_eq!(parse_meta_tsv(&write_meta_tsv(&meta)).unwrap(), meta);
        assert!(parse_meta_tsv("n_frames\t3\n").is_err());
    }

    #[test]
    fn matrix_csv() {
        let m = Array2::from_shape_fn((3, 4), |(i, j)| i as f64 * 0.1 - j as f64 / 3.0);
        let back = parse_matrix_csv(&write_matrix_csv(&m), Some(4)).unwrap();
        assert_eq!(back, m);
        assert!(parse_matrix_csv("1,2\n3\n", None).is_err());
        assert!(parse_matrix_csv("1,2\n", Some(61)).is_err());
    }
}
