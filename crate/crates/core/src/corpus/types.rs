use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Number of tracked articulators.
pub const N_ARTICULATORS: usize = 8;
/// Points per articulator contour.
pub const POINTS_PER_CONTOUR: usize = 50;
/// Points in one frame (all articulators).
pub const POINTS_PER_FRAME: usize = N_ARTICULATORS * POINTS_PER_CONTOUR;
/// Flattened coordinate count per frame: articulator × point × (x, y).
pub const CONTOUR_DIM: usize = POINTS_PER_FRAME * 2;
/// Coordinates per articulator (50 points × 2).
pub const COORDS_PER_ARTICULATOR: usize = POINTS_PER_CONTOUR * 2;

/// MRI pixel spacing.
pub const PIXEL_SPACING_MM: f64 = 1.62;
/// Side of the square MRI image, in pixels.
pub const IMAGE_SIZE_PX: f64 = 136.0;
pub const DEFAULT_FRAME_RATE_HZ: f64 = 50.0;
pub const AUDIO_SAMPLE_RATE_HZ: u32 = 16_000;

/// Converts a pixel distance to millimeters.
pub fn to_millimeters(value_px: f64) -> f64 {
    value_px * PIXEL_SPACING_MM
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2D {
    pub x_px: f64,
    pub y_px: f64,
}

impl Point2D {
    pub fn new(x_px: f64, y_px: f64) -> Self {
        Self { x_px, y_px }
    }
}

/// The eight tracked vocal-tract structures, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArticulatorId {
    Arytenoid,
    Epiglottis,
    LowerLip,
    PharyngealWall,
    Velum,
    Tongue,
    UpperLip,
    VocalFolds,
}

impl ArticulatorId {
    pub const ALL: [ArticulatorId; N_ARTICULATORS] = [
        ArticulatorId::Arytenoid,
        ArticulatorId::Epiglottis,
        ArticulatorId::LowerLip,
        ArticulatorId::PharyngealWall,
        ArticulatorId::Velum,
        ArticulatorId::Tongue,
        ArticulatorId::UpperLip,
        ArticulatorId::VocalFolds,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            ArticulatorId::Arytenoid => "arytenoid",
            ArticulatorId::Epiglottis => "epiglottis",
            ArticulatorId::LowerLip => "lower_lip",
            ArticulatorId::PharyngealWall => "pharyngeal_wall",
            ArticulatorId::Velum => "velum",
            ArticulatorId::Tongue => "tongue",
            ArticulatorId::UpperLip => "upper_lip",
            ArticulatorId::VocalFolds => "vocal_folds",
        }
    }
}

impl fmt::Display for ArticulatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ArticulatorId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ArticulatorId::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| format!("unknown articulator `{s}`"))
    }
}

/// Geometry of one MRI frame: 50 points for each of the 8 articulators.
///
/// Points are stored articulator-major in canonical order, so the flattened
/// coordinate vector is `[art0 p0 x, art0 p0 y, art0 p1 x, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameContours {
    points: Vec<Point2D>,
}

impl FrameContours {
    pub fn new(points: Vec<Point2D>) -> Result<Self> {
        if points.len() != POINTS_PER_FRAME {
            return Err(Error::contract(format!(
                "frame needs {POINTS_PER_FRAME} points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.x_px.is_finite() || !p.y_px.is_finite()) {
            return Err(Error::contract("frame contains a non-finite coordinate"));
        }
        Ok(Self { points })
    }

    /// Builds a frame from an 800-wide coordinate vector in canonical order.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if coords.len() != CONTOUR_DIM {
            return Err(Error::contract(format!(
                "flat contour vector must have {CONTOUR_DIM} entries, got {}",
                coords.len()
            )));
        }
        Self::new(
            coords
                .chunks_exact(2)
                .map(|xy| Point2D::new(xy[0], xy[1]))
                .collect(),
        )
    }

    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x_px, p.y_px]).collect()
    }

    pub fn points(&self) -> &[Point2D] {
        &self.points
    }

    pub fn articulator(&self, id: ArticulatorId) -> &[Point2D] {
        let start = id.index() * POINTS_PER_CONTOUR;
        &self.points[start..start + POINTS_PER_CONTOUR]
    }

    pub fn point(&self, id: ArticulatorId, k: usize) -> Point2D {
        self.articulator(id)[k]
    }

    /// True when every coordinate lies within `[0, size]`.
    pub fn in_bounds(&self, size: f64) -> bool {
        self.points
            .iter()
            .all(|p| (0.0..=size).contains(&p.x_px) && (0.0..=size).contains(&p.y_px))
    }
}

/// Time-ordered contour frames at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSequence {
    pub frames: Vec<FrameContours>,
    pub frame_rate_hz: f64,
}

impl ContourSequence {
    pub fn new(frames: Vec<FrameContours>, frame_rate_hz: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::contract("contour sequence has no frames"));
        }
        if !(frame_rate_hz > 0.0 && frame_rate_hz.is_finite()) {
            return Err(Error::contract(format!("invalid frame rate {frame_rate_hz}")));
        }
        Ok(Self {
            frames,
            frame_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// A labelled phonetic interval `[start_s, end_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
}

impl AlignmentSegment {
    pub fn new(start_s: f64, end_s: f64, label: impl Into<String>) -> Self {
        Self {
            start_s,
            end_s,
            label: label.into(),
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t < self.end_s
    }
}

/// Returns the segment whose half-open interval contains `t`.
pub fn segment_at(align: &[AlignmentSegment], t: f64) -> Option<&AlignmentSegment> {
    // Segments are sorted and disjoint.
    let idx = align.partition_point(|s| s.start_s <= t);
    if idx == 0 {
        return None;
    }
    let seg = &align[idx - 1];
    seg.contains(t).then_some(seg)
}

/// Midpoint time of frame `t` at `frame_rate_hz`.
pub fn frame_midpoint_s(t: usize, frame_rate_hz: f64) -> f64 {
    (t as f64 + 0.5) / frame_rate_hz
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn millimeter_conversion() {
        assert_eq!(to_millimeters(1.0), 1.62);
        assert_eq!(to_millimeters(0.0), 0.0);
        assert_eq!(to_millimeters(100.0), 162.0);
    }

    #[test]
    fn articulator_labels_round_trip() {
        for a in ArticulatorId::ALL {
            assert_eq!(a.label().parse::<ArticulatorId>().unwrap(), a);
        }
        assert!("jaw".parse::<ArticulatorId>().is_err());
        let mut sorted = ArticulatorId::ALL.to_vec();
        sorted.sort();
        assert_eq!(sorted, ArticulatorId::ALL.to_vec());
    }

    #[test]
    fn flat_layout_is_articulator_point_xy() {
        let coords: Vec<f64> = (0..CONTOUR_DIM).map(|i| i as f64).collect();
        let frame = FrameContours::from_flat(&coords).unwrap();
        let p = frame.point(ArticulatorId::Tongue, 12);
        let base = (5 * POINTS_PER_CONTOUR + 12) * 2;
        assert_eq!(p, Point2D::new(base as f64, base as f64 + 1.0));
        assert_eq!(frame.flat(), coords);
    }

    #[test]
    fn rejects_short_frames() {
        assert!(FrameContours::new(vec![Point2D::default(); 399]).is_err());
    }

    #[test]
    fn segment_lookup_is_half_open() {
        let align = vec![
            AlignmentSegment::new(0.0, 0.05, "a"),
            AlignmentSegment::new(0.05, 0.1, "t"),
            AlignmentSegment::new(0.2, 0.3, "i"),
        ];
        assert_eq!(segment_at(&align, 0.0).unwrap().label, "a");
        assert_eq!(segment_at(&align, 0.05).unwrap().label, "t");
        assert!(segment_at(&align, 0.1).is_none());
        assert!(segment_at(&align, 0.15).is_none());
        assert_eq!(segment_at(&align, 0.25).unwrap().label, "i");
        assert!(segment_at(&align, -1.0).is_none());
    }
}
