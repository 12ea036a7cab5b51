use crate::error::{invalid, Error, Result};
use crate::numerics::{Mask, Tensor};

/// Default upper FPR limit for AU-PRO integration.
pub const DEFAULT_FPR_CAP: f64 = 0.3;

/// Per-region-overlap curve as `(fpr, pro)` points, starting at `(0, 0)`
/// with one point per distinct score threshold (descending). Regions are the
/// 4-connected components of each mask; PRO is the mean over all regions of
/// the fraction of the region at or above the threshold. FPR is over normal
/// pixels of all maps.
pub fn pro_curve(maps: &[Tensor<f64>], masks: &[Mask]) -> Result<Vec<(f64, f64)>> {
    if maps.len() != masks.len() {
        return invalid(format!("{} maps but {} masks", maps.len(), masks.len()));
    }
    // (score, region id or usize::MAX for normal pixels)
    let mut pixels: Vec<(f64, usize)> = Vec::new();
    let mut region_sizes: Vec<usize> = Vec::new();
    for (map, mask) in maps.iter().zip(masks) {
        let (h, w) = map.dims2()?;
        if (h, w) != (mask.height(), mask.width()) {
            return invalid(format!("map is {h}×{w} but mask is {}×{}", mask.height(), mask.width()));
        }
        let (labels, n) = mask.components();
        let base = region_sizes.len();
        region_sizes.extend(std::iter::repeat_n(0, n));
        for (&s, lab) in map.data().iter().zip(&labels) {
            if !s.is_finite() {
                return invalid("anomaly maps must be finite");
            }
            match lab {
                Some(r) => {
                    region_sizes[base + r] += 1;
                    pixels.push((s, base + r));
                }
                None => pixels.push((s, usize::MAX)),
            }
        }
    }
    if region_sizes.is_empty() {
        return Err(Error::UndefinedMetric(
            "AU-PRO needs at least one anomalous region".into(),
        ));
    }
    let negatives = pixels.iter().filter(|p| p.1 == usize::MAX).count();
    if negatives == 0 {
        return Err(Error::UndefinedMetric("AU-PRO needs normal pixels".into()));
    }
    pixels.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n_regions = region_sizes.len() as f64;
    let mut hits = vec![0usize; region_sizes.len()];
    let mut fp = 0usize;
    let mut curve = vec![(0.0, 0.0)];
    let mut i = 0;
    while i < pixels.len() {
        let s = pixels[i].0;
        while i < pixels.len() && pixels[i].0 == s {
            match pixels[i].1 {
                usize::MAX => fp += 1,
                r => hits[r] += 1,
            }
            i += 1;
        }
        let pro = hits
            .iter()
            .zip(&region_sizes)
            .map(|(&h, &n)| h as f64 / n as f64)
            .sum::<f64>()
            / n_regions;
        curve.push((fp as f64 / negatives as f64, pro));
    }
    Ok(curve)
}

/// Area under the PRO curve for `fpr ∈ [0, fpr_cap]`, divided by `fpr_cap`.
/// The curve is linearly interpolated at the cap.
pub fn au_pro(maps: &[Tensor<f64>], masks: &[Mask], fpr_cap: f64) -> Result<f64> {
    if !(fpr_cap > 0.0 && fpr_cap <= 1.0) {
        return invalid(format!("FPR cap must be in (0, 1], got {fpr_cap}"));
    }
    let curve = pro_curve(maps, masks)?;
    let mut area = 0.0;
    for w in curve.windows(2) {
        let ((f0, p0), (f1, p1)) = (w[0], w[1]);
        if f0 >= fpr_cap {
            break;
        }
        if f1 <= fpr_cap {
            area += 0.5 * (f1 - f0) * (p0 + p1);
        } else {
            let pc = p0 + (p1 - p0) * (fpr_cap - f0) / (f1 - f0);
            area += 0.5 * (fpr_cap - f0) * (p0 + pc);
            break;
        }
    }
    Ok(area / fpr_cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(h: usize, w: usize, on: &[(usize, usize)]) -> Mask {
        let mut m = Mask::empty(h, w);
        for &(y, x) in on {
            m.set(y, x, true);
        }
        m
    }

    #[test]
    fn perfect_map_scores_one() {
        let mask = mask_from(4, 4, &[(1, 1), (1, 2), (3, 3)]);
        let map = Tensor::from_fn(&[4, 4], |i| if mask.bits()[i] { 1.0 } else { 0.0 });
        for cap in [0.01, 0.3, 1.0] {
            assert!((au_pro(&[map.clone()], &[mask.clone()], cap).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn half_detected_regions() {
        // region A at (0,0)-(0,1) scored 2, region B at (3,3) scored like background
        let mask = mask_from(4, 4, &[(0, 0), (0, 1), (3, 3)]);
        let map = Tensor::from_fn(&[4, 4], |i| if i < 2 { 2.0 } else { 0.0 });
        let curve = pro_curve(&[map], &[mask]).unwrap();
        assert_eq!(curve[1], (0.0, 0.5));
        assert_eq!(curve[2], (1.0, 1.0));
    }

    #[test]
    fn errors() {
        let map = Tensor::zeros(&[2, 2]);
        assert!(matches!(
            au_pro(&[map.clone()], &[Mask::empty(2, 2)], 0.3),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(au_pro(&[map.clone()], &[Mask::empty(2, 2)], 0.0).is_err());
        assert!(au_pro(&[map], &[Mask::empty(3, 2)], 0.3).is_err());
    }
}
