//! Per-articulator error metrics in millimetres, report aggregation and
//! significance testing.

use rayon::prelude::*;

use crate::corpus::{ArticulatorId, FrameContours, N_ARTICULATORS, PIXEL_SPACING_MM, POINTS_PER_CONTOUR};
use crate::error::{Error, Result};
use crate::numfmt::fmt_g17;

/// Residual used for the per-frame median.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MedianMode {
    /// Median of the 100 absolute coordinate residuals.
    #[default]
    Coordinate,
    /// Median of the 50 point-to-point Euclidean distances.
    PointEuclidean,
}

impl std::str::FromStr for MedianMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "coordinate" => Ok(MedianMode::Coordinate),
            "euclidean" => Ok(MedianMode::PointEuclidean),
            _ => Err(format!("unknown median mode `{s}` (coordinate|euclidean)")),
        }
    }
}

impl MedianMode {
    pub fn name(self) -> &'static str {
        match self {
            MedianMode::Coordinate => "coordinate",
            MedianMode::PointEuclidean => "euclidean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameArticulatorError {
    pub frame_index: usize,
    pub articulator: ArticulatorId,
    pub rmse_mm: f64,
    pub median_mm: f64,
}

/// Median of a slice, averaging the two central values for even counts.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Errors of one frame with the coordinate-wise median.
pub fn frame_errors(pred: &FrameContours, truth: &FrameContours) -> Result<Vec<FrameArticulatorError>> {
    frame_errors_with(pred, truth, MedianMode::Coordinate, 0)
}

/// RMSE over each articulator's 100 coordinates and the median residual,
/// both in mm.
pub fn frame_errors_with(
    pred: &FrameContours,
    truth: &FrameContours,
    mode: MedianMode,
    frame_index: usize,
) -> Result<Vec<FrameArticulatorError>> {
    let (p, t) = (pred.points(), truth.points());
    if p.len() != t.len() || p.len() != N_ARTICULATORS * POINTS_PER_CONTOUR {
        return Err(Error::contract("frame_errors needs two complete frames"));
    }
    let mut out = Vec::with_capacity(N_ARTICULATORS);
    for art in ArticulatorId::ALL {
        let range = art.index() * POINTS_PER_CONTOUR..(art.index() + 1) * POINTS_PER_CONTOUR;
        let mut sq = 0.0;
        let mut coord_abs = Vec::with_capacity(2 * POINTS_PER_CONTOUR);
        let mut point_dist = Vec::with_capacity(POINTS_PER_CONTOUR);
        for (a, b) in p[range.clone()].iter().zip(&t[range]) {
            let dx = PIXEL_SPACING_MM * (a.x_px - b.x_px);
            let dy = PIXEL_SPACING_MM * (a.y_px - b.y_px);
            sq += dx * dx + dy * dy;
            coord_abs.push(dx.abs());
            coord_abs.push(dy.abs());
            point_dist.push(dx.hypot(dy));
        }
        let rmse_mm = (sq / (2 * POINTS_PER_CONTOUR) as f64).sqrt();
        let median_mm = match mode {
            MedianMode::Coordinate => median(&mut coord_abs),
            MedianMode::PointEuclidean => median(&mut point_dist),
        };
        out.push(FrameArticulatorError {
            frame_index,
            articulator: art,
            rmse_mm,
            median_mm,
        });
    }
    Ok(out)
}

/// Frame errors for aligned prediction/truth frame lists, numbered from
/// `first_index`.
pub fn sequence_errors(
    pred: &[FrameContours],
    truth: &[FrameContours],
    mode: MedianMode,
    first_index: usize,
) -> Result<Vec<Vec<FrameArticulatorError>>> {
    if pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "{} predicted frames vs {} reference frames",
            pred.len(),
            truth.len()
        )));
    }
    pred.par_iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (p, t))| frame_errors_with(p, t, mode, first_index + i))
        .collect()
}

/// One row of the report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub rmse_mean_mm: f64,
    pub rmse_std_mm: f64,
    pub median_mean_mm: f64,
    pub p_vs_baseline: Option<f64>,
}

impl ReportRow {
    pub fn significant(&self) -> Option<bool> {
        self.p_vs_baseline.map(|p| p < SIGNIFICANCE_LEVEL)
    }
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Per-articulator rows in canonical order plus the overall row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub articulators: Vec<ReportRow>,
    pub overall: ReportRow,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Averages frame errors per articulator (population std over frames), then
/// across the 8 articulators. The overall std is the mean of the
/// per-articulator stds.
pub fn aggregate_report(errors: &[Vec<FrameArticulatorError>]) -> Result<EvalReport> {
    if errors.is_empty() {
        return Err(Error::contract("cannot aggregate zero frames"));
    }
    if let Some(f) = errors.iter().find(|f| f.len() != N_ARTICULATORS) {
        return Err(Error::contract(format!(
            "frame {} has {} articulator entries",
            f.first().map_or(0, |e| e.frame_index),
            f.len()
        )));
    }
    let articulators: Vec<ReportRow> = (0..N_ARTICULATORS)
        .map(|a| {
            let (rmse_mean_mm, rmse_std_mm) = mean_std(errors.iter().map(move |f| f[a].rmse_mm));
            let median_mean_mm = errors.iter().map(|f| f[a].median_mm).sum::<f64>() / errors.len() as f64;
            ReportRow {
                rmse_mean_mm,
                rmse_std_mm,
                median_mean_mm,
                p_vs_baseline: None,
            }
        })
        .collect();
    let k = N_ARTICULATORS as f64;
    let overall = ReportRow {
        rmse_mean_mm: articulators.iter().map(|r| r.rmse_mean_mm).sum::<f64>() / k,
        rmse_std_mm: articulators.iter().map(|r| r.rmse_std_mm).sum::<f64>() / k,
        median_mean_mm: articulators.iter().map(|r| r.median_mean_mm).sum::<f64>() / k,
        p_vs_baseline: None,
    };
    Ok(EvalReport { articulators, overall })
}

/// Fills in p-values of a two-sided Student t-test on per-frame RMSEs against
/// a baseline evaluated on the same frames. The overall row tests the
/// per-frame mean over articulators.
pub fn compare_to_baseline(
    report: &mut EvalReport,
    errors: &[Vec<FrameArticulatorError>],
    baseline: &[Vec<FrameArticulatorError>],
) -> Result<()> {
    if errors.len() != baseline.len() {
        return Err(Error::contract(format!(
            "baseline covers {} frames, this evaluation {}",
            baseline.len(),
            errors.len()
        )));
    }
    let column = |e: &[Vec<FrameArticulatorError>], a: usize| -> Vec<f64> { e.iter().map(|f| f[a].rmse_mm).collect() };
    for a in 0..N_ARTICULATORS {
        let t = students_t_test(&column(errors, a), &column(baseline, a))?;
        report.articulators[a].p_vs_baseline = Some(t.p_two_sided);
    }
    let frame_mean = |e: &[Vec<FrameArticulatorError>]| -> Vec<f64> {
        e.iter()
            .map(|f| f.iter().map(|x| x.rmse_mm).sum::<f64>() / N_ARTICULATORS as f64)
            .collect()
    };
    let t = students_t_test(&frame_mean(errors), &frame_mean(baseline))?;
    report.overall.p_vs_baseline = Some(t.p_two_sided);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
    /// Zero pooled variance with different means.
    pub degenerate: bool,
}

/// Pooled-variance two-sample t-test.
pub fn students_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::contract("t-test needs at least two values per sample"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let ssa: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let ssb: f64 = b.iter().map(|x| (x - mb) * (x - mb)).sum();
    let df = na + nb - 2.0;
    let pooled = (ssa + ssb) / df;
    if pooled == 0.0 {
        return Ok(if ma == mb {
            TTest {
                t: 0.0,
                df,
                p_two_sided: 1.0,
                degenerate: false,
            }
        } else {
            TTest {
                t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
                df,
                p_two_sided: 0.0,
                degenerate: true,
            }
        });
    }
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TTest {
        t,
        df,
        p_two_sided: t_two_sided_p(t, df),
        degenerate: false,
    })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Natural log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `I_x(a, b)` via the continued fraction (modified Lentz), using the
/// symmetry `I_x(a, b) = 1 − I_{1−x}(b, a)` where it converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const TOL: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < TOL {
            break;
        }
    }
    h
}

pub const REPORT_CSV_HEADER: &str = "articulator,rmse_mean_mm,rmse_std_mm,median_mean_mm,p_vs_baseline";
pub const FRAME_ERRORS_CSV_HEADER: &str = "frame,articulator,rmse_mm,median_mm";

fn row_line(label: &str, r: &ReportRow) -> String {
    format!(
        "{label},{},{},{},{}\n",
        fmt_g17(r.rmse_mean_mm),
        fmt_g17(r.rmse_std_mm),
        fmt_g17(r.median_mean_mm),
        r.p_vs_baseline.map(fmt_g17).unwrap_or_default()
    )
}

pub fn write_report_csv(report: &EvalReport) -> String {
    let mut out = format!("{REPORT_CSV_HEADER}\n");
    for (art, row) in ArticulatorId::ALL.iter().zip(&report.articulators) {
        out.push_str(&row_line(art.label(), row));
    }
    out.push_str(&row_line("mean", &report.overall));
    out
}

pub fn parse_report_csv(text: &str) -> Result<EvalReport> {
    let what = "report csv";
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h == REPORT_CSV_HEADER => {}
        _ => return Err(Error::parse(what, 1, format!("expected header `{REPORT_CSV_HEADER}`"))),
    }
    let expected: Vec<&str> = ArticulatorId::ALL
        .iter()
        .map(|a| a.label())
        .chain(std::iter::once("mean"))
        .collect();
    let mut rows = Vec::with_capacity(expected.len());
    for label in &expected {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::parse(what, 0, format!("missing row `{label}`")))?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::parse(what, ln, format!("expected 5 fields, found {}", f.len())));
        }
        if f[0] != *label {
            return Err(Error::parse(what, ln, format!("expected row `{label}`, found `{}`", f[0])));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::parse(what, ln, format!("bad number `{s}`")))
        };
        rows.push(ReportRow {
            rmse_mean_mm: num(f[1])?,
            rmse_std_mm: num(f[2])?,
            median_mean_mm: num(f[3])?,
            p_vs_baseline: if f[4].is_empty() { None } else { Some(num(f[4])?) },
        });
    }
    if let Some((ln, l)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::parse(what, ln, format!("unexpected trailing row `{l}`")));
    }
    let overall = rows.pop().expect("nine rows");
    Ok(EvalReport {
        articulators: rows,
        overall,
    })
}

pub fn write_frame_errors_csv(errors: &[Vec<FrameArticulatorError>]) -> String {
    let mut out = format!("{FRAME_ERRORS_CSV_HEADER}\n");
    for frame in errors {
        for e in frame {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.frame_index,
                e.articulator.label(),
                fmt_g17(e.rmse_mm),
                fmt_g17(e.median_mm)
            ));
        }
    }
    out
}

pub fn parse_frame_errors_csv(text: &str) -> Result<Vec<Vec<FrameArticulatorError>>> {
    let what = "frame errors csv";
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h == FRAME_ERRORS_CSV_HEADER => {}
        _ => return Err(Error::parse(what, 1, format!("expected header `{FRAME_ERRORS_CSV_HEADER}`"))),
    }
    let mut frames: Vec<Vec<FrameArticulatorError>> = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::parse(what, ln, format!("expected 4 fields, found {}", f.len())));
        }
        let frame_index: usize = f[0]
            .parse()
            .map_err(|_| Error::parse(what, ln, format!("bad frame index `{}`", f[0])))?;
        let articulator: ArticulatorId = f[1].parse().map_err(|e: String| Error::parse(what, ln, e))?;
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::parse(what, ln, format!("bad number `{s}`")))
        };
        let e = FrameArticulatorError {
            frame_index,
            articulator,
            rmse_mm: num(f[2])?,
            median_mm: num(f[3])?,
        };
        let starts_new = frames.last().is_none_or(|l| l.len() == N_ARTICULATORS);
        if starts_new {
            frames.push(Vec::with_capacity(N_ARTICULATORS));
        }
        let cur = frames.last_mut().expect("just pushed");
        if articulator.index() != cur.len() || cur.first().is_some_and(|x| x.frame_index != frame_index) {
            return Err(Error::parse(what, ln, "rows must list 8 articulators per frame in canonical order"));
        }
        cur.push(e);
    }
    if frames.last().is_some_and(|l| l.len() != N_ARTICULATORS) {
        return Err(Error::parse(what, 0, "last frame is incomplete"));
    }
    Ok(frames)
}
