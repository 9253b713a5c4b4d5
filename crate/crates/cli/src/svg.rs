//! Contour overlay plots.

use std::fmt::Write as _;

use vtinv_core::corpus::{ArticulatorId, FrameContours, IMAGE_SIZE_PX};
use vtinv_core::eval::frame_errors;
use vtinv_core::Result;

/// Stroke color of each articulator, canonical order.
pub const ARTICULATOR_COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub const DASH_PATTERN: &str = "2,1.5";

/// Mean over the 8 articulators of the per-frame RMSE, in mm.
pub fn mean_rmse_mm(pred: &FrameContours, truth: &FrameContours) -> Result<f64> {
    let errs = frame_errors(pred, truth)?;
    Ok(errs.iter().map(|e| e.rmse_mm).sum::<f64>() / errs.len() as f64)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(out: &mut String, frame: &FrameContours, id: ArticulatorId, dashed: bool) {
    let pts: Vec<String> = frame
        .articulator(id)
        .iter()
        .map(|p| format!("{:.3},{:.3}", p.x_px, p.y_px))
        .collect();
    let dash = if dashed {
        format!(" stroke-dasharray=\"{DASH_PATTERN}\"")
    } else {
        String::new()
    };
    let _ = writeln!(
        out,
        "  <polyline class=\"{}\" data-source=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"0.6\"{dash}/>",
        id.label(),
        if dashed { "predicted" } else { "truth" },
        pts.join(" "),
        ARTICULATOR_COLORS[id.index()],
    );
}

/// Predicted contours dashed over the true ones, in image pixel
/// coordinates. The title gets the frame's mean RMSE appended.
pub fn emit_contour_svg(pred: &FrameContours, truth: &FrameContours, title: &str) -> Result<String> {
    let rmse = mean_rmse_mm(pred, truth)?;
    let full_title = if title.is_empty() {
        format!("RMSE {rmse:.2} mm")
    } else {
        format!("{title}: RMSE {rmse:.2} mm")
    };
    let size = IMAGE_SIZE_PX;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {size} {size}\" width=\"544\" height=\"544\">"
    );
    let _ = writeln!(out, "  <title>{}</title>", escape(&full_title));
    let _ = writeln!(out, "  <rect x=\"0\" y=\"0\" width=\"{size}\" height=\"{size}\" fill=\"white\"/>");
    for id in ArticulatorId::ALL {
        polyline(&mut out, truth, id, false);
    }
    for id in ArticulatorId::ALL {
        polyline(&mut out, pred, id, true);
    }
    let _ = writeln!(
        out,
        "  <text x=\"2\" y=\"6\" font-size=\"4\" font-family=\"sans-serif\">{}</text>",
        escape(&full_title)
    );
    out.push_str("</svg>\n");
    Ok(out)
}
