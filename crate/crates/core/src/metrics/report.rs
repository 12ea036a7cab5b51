use crate::error::{invalid, Result};
use crate::metrics::{au_pro, au_roc, average_precision, f1_max};
use crate::numerics::{Mask, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelMetrics {
    pub auroc: f64,
    pub ap: f64,
    pub f1max: f64,
    pub aupro: f64,
}

/// Image- and pixel-level metrics with their mean (mAD). Without
/// ground-truth masks the pixel block is absent and mAD averages the three
/// image metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub auroc_img: f64,
    pub ap_img: f64,
    pub f1max_img: f64,
    pub pixel: Option<PixelMetrics>,
    pub mad: f64,
}

impl PixelMetrics {
    /// Pools every pixel of every map; `masks` must match the map resolution.
    pub fn compute(maps: &[Tensor<f64>], masks: &[Mask], fpr_cap: f64) -> Result<Self> {
        if maps.len() != masks.len() {
            return invalid(format!("{} maps but {} masks", maps.len(), masks.len()));
        }
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for (m, k) in maps.iter().zip(masks) {
            if m.len() != k.bits().len() {
                return invalid("map and mask sizes differ");
            }
            scores.extend_from_slice(m.data());
            labels.extend_from_slice(k.bits());
        }
        Ok(Self {
            auroc: au_roc(&scores, &labels)?,
            ap: average_precision(&scores, &labels)?,
            f1max: f1_max(&scores, &labels)?,
            aupro: au_pro(maps, masks, fpr_cap)?,
        })
    }
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "auroc_img,ap_img,f1max_img,auroc_px,ap_px,f1max_px,aupro,mad";

    pub fn new(auroc_img: f64, ap_img: f64, f1max_img: f64, pixel: Option<PixelMetrics>) -> Self {
        let mut vals = vec![auroc_img, ap_img, f1max_img];
        if let Some(p) = pixel {
            vals.extend([p.auroc, p.ap, p.f1max, p.aupro]);
        }
        let mad = vals.iter().sum::<f64>() / vals.len() as f64;
        Self {
            auroc_img,
            ap_img,
            f1max_img,
            pixel,
            mad,
        }
    }

    /// Image metrics from per-sample scores; pixel metrics when maps and
    /// masks are given.
    pub fn compute(
        scores: &[f64],
        labels: &[bool],
        localization: Option<(&[Tensor<f64>], &[Mask])>,
        fpr_cap: f64,
    ) -> Result<Self> {
        let pixel = localization
            .map(|(maps, masks)| PixelMetrics::compute(maps, masks, fpr_cap))
            .transpose()?;
        Ok(Self::new(
            au_roc(scores, labels)?,
            average_precision(scores, labels)?,
            f1_max(scores, labels)?,
            pixel,
        ))
    }

    /// Values in CSV column order; pixel entries are `None` when absent.
    pub fn values(&self) -> [Option<f64>; 8] {
        let p = self.pixel;
        [
            Some(self.auroc_img),
            Some(self.ap_img),
            Some(self.f1max_img),
            p.map(|p| p.auroc),
            p.map(|p| p.ap),
            p.map(|p| p.f1max),
            p.map(|p| p.aupro),
            Some(self.mad),
        ]
    }

    /// One CSV row matching [`Self::CSV_HEADER`]; missing values print as `n/a`.
    pub fn csv_row(&self) -> String {
        self.values()
            .iter()
            .map(|v| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}")))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mad_is_mean_of_components() {
        let p = PixelMetrics {
            auroc: 0.9,
            ap: 0.5,
            f1max: 0.6,
            aupro: 0.7,
        };
        let r = MetricsReport::new(1.0, 0.8, 0.75, Some(p));
        let want = (1.0 + 0.8 + 0.75 + 0.9 + 0.5 + 0.6 + 0.7) / 7.0;
        assert!((r.mad - want).abs() < 1e-12);
        assert_eq!(r.csv_row().split(',').count(), 8);
        let img = MetricsReport::new(1.0, 0.5, 0.6, None);
        assert!(img.csv_row().contains("n/a"));
        assert!((img.mad - 0.7).abs() < 1e-12);
    }
}
