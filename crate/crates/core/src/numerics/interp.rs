use crate::error::{invalid, Result};
use crate::numerics::{Real, Tensor};

/// Source coordinate of output index `i` under corner alignment, as
/// `(lower index, fractional weight)`. Computed in integer arithmetic so grid
/// points that land exactly on input samples get weight zero.
fn corner_aligned(i: usize, src: usize, dst: usize) -> (usize, usize, usize) {
    if dst == 1 || src == 1 {
        return (0, 0, 1);
    }
    let num = i * (src - 1);
    let den = dst - 1;
    (num / den, num % den, den)
}

/// Bilinear upsampling of an `h×w` map to `H×W` with corner alignment: output
/// pixel `(0,0)` coincides with input `(0,0)` and output `(H-1,W-1)` with
/// input `(h-1,w-1)`. Outputs are convex combinations of inputs, so they stay
/// within `[min(m), max(m)]`.
pub fn bilinear_upsample<T: Real>(m: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (h, w) = m.dims2()?;
    if out_h == 0 || out_w == 0 {
        return invalid("upsample target dims must be positive");
    }
    if h == 0 || w == 0 {
        return invalid("upsample source dims must be positive");
    }
    if out_h < h || out_w < w {
        return invalid(format!("upsample target {out_h}×{out_w} smaller than source {h}×{w}"));
    }
    if out_h == h && out_w == w {
        return Ok(m.clone());
    }
    let cols: Vec<_> = (0..out_w).map(|x| corner_aligned(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, fy_num, fy_den) = corner_aligned(y, h, out_h);
        let y1 = (y0 + 1).min(h - 1);
        let fy = T::from_usize_lossy(fy_num) / T::from_usize_lossy(fy_den);
        for &(x0, fx_num, fx_den) in &cols {
            let x1 = (x0 + 1).min(w - 1);
            let fx = T::from_usize_lossy(fx_num) / T::from_usize_lossy(fx_den);
            let top = m.at2(y0, x0) * (T::one() - fx) + m.at2(y0, x1) * fx;
            let bottom = m.at2(y1, x0) * (T::one() - fx) + m.at2(y1, x1) * fx;
            let v = if fy_num == 0 {
                top
            } else {
                top * (T::one() - fy) + bottom * fy
            };
            out.push(v);
        }
    }
    Ok(Tensor::from_parts(vec![out_h, out_w], out))
}

/// Output pixel that an input grid point maps to under corner alignment
/// (rounded to nearest when the grids do not share the point exactly).
pub fn aligned_output_index(i: usize, src: usize, dst: usize) -> usize {
    if src == 1 {
        return 0;
    }
    let num = i * (dst - 1);
    let den = src - 1;
    (num + den / 2) / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(h: usize, w: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::new(&[h, w], v.to_vec()).unwrap()
    }

    #[test]
    fn constant_extension() {
        let out = bilinear_upsample(&t2(1, 1, &[2.5]), 4, 4).unwrap();
        assert_eq!(out.shape(), &[4, 4]);
        assert!(out.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn identity_when_same_size() {
        let m = t2(2, 3, &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(bilinear_upsample(&m, 2, 3).unwrap(), m);
    }

    #[test]
    fn ramp_matches_hand_weights() {
        // Columns map to source x = X/3, so the row is [0, 1/3, 2/3, 1].
        let out = bilinear_upsample(&t2(2, 2, &[0., 1., 0., 1.]), 4, 4).unwrap();
        for y in 0..4 {
            let row: Vec<f64> = (0..4).map(|x| out.at2(y, x)).collect();
            let want = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
            for (a, b) in row.iter().zip(want) {
                assert!((a - b).abs() < 1e-15, "{row:?}");
            }
        }
        // Centre of a 3×3 upsample of [[0,1],[2,3]] is the average 1.5.
        let c = bilinear_upsample(&t2(2, 2, &[0., 1., 2., 3.]), 3, 3).unwrap();
        assert_eq!(c.at2(1, 1), 1.5);
    }

    #[test]
    fn corners_are_exact() {
        let m = t2(2, 3, &[0.1, 0.7, -3.0, 4.0, 9.5, 2.0]);
        let out = bilinear_upsample(&m, 5, 9).unwrap();
        // (h-1)=1 divides (H-1)=4 and (w-1)=2 divides (W-1)=8: every input lands on a pixel.
        for y in 0..2 {
            for x in 0..3 {
                let oy = aligned_output_index(y, 2, 5);
                let ox = aligned_output_index(x, 3, 9);
                assert_eq!(out.at2(oy, ox), m.at2(y, x));
            }
        }
    }

    #[test]
    fn rejects_zero_or_shrinking_targets() {
        let m = t2(2, 2, &[0.; 4]);
        assert!(bilinear_upsample(&m, 0, 4).is_err());
        assert!(bilinear_upsample(&m, 1, 4).is_err());
    }
}
