//! Detection and localization metrics.
//!
//! Image-level metrics rank one score per sample; pixel-level metrics pool
//! every pixel of every test map. Labels are `true` for anomalous.

mod pro;
mod ranking;
mod report;

pub use pro::{au_pro, pro_curve, DEFAULT_FPR_CAP};
pub use ranking::{au_roc, average_precision, f1_max, rank_order};
pub use report::{MetricsReport, PixelMetrics};

use crate::error::{invalid, Result};

pub(crate) fn check_scored(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return invalid(format!("{} scores but {} labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return invalid("scores must be finite");
    }
    Ok(())
}
