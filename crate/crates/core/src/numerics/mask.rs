use crate::error::{invalid, Result};

/// Binary `h×w` mask (ground-truth anomaly region).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    h: usize,
    w: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(h: usize, w: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != h * w {
            return invalid(format!("mask {h}×{w} needs {} bits, got {}", h * w, bits.len()));
        }
        Ok(Self { h, w, bits })
    }

    pub fn empty(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            bits: vec![false; h * w],
        }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.w + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.w + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn ratio(&self) -> f64 {
        self.count() as f64 / (self.h * self.w) as f64
    }

    /// Nearest-neighbour resize: output pixel `(Y, X)` reads source
    /// `(⌊Y·h/H⌋, ⌊X·w/W⌋)`, so integer factors replicate each cell into a block.
    pub fn resize_nearest(&self, out_h: usize, out_w: usize) -> Result<Self> {
        if out_h == 0 || out_w == 0 {
            return invalid("mask resize target must be positive");
        }
        let mut bits = Vec::with_capacity(out_h * out_w);
        for y in 0..out_h {
            let sy = y * self.h / out_h;
            for x in 0..out_w {
                bits.push(self.get(sy, x * self.w / out_w));
            }
        }
        Ok(Self {
            h: out_h,
            w: out_w,
            bits,
        })
    }

    /// 4-connected component labels: `None` for background, `Some(k)` for
    /// the k-th component in raster order of first pixel.
    pub fn components(&self) -> (Vec<Option<usize>>, usize) {
        let mut labels = vec![None; self.bits.len()];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || labels[start].is_some() {
                continue;
            }
            labels[start] = Some(next);
            stack.push(start);
            while let Some(p) = stack.pop() {
                let (y, x) = (p / self.w, p % self.w);
                let mut visit = |q: usize| {
                    if self.bits[q] && labels[q].is_none() {
                        labels[q] = Some(next);
                        stack.push(q);
                    }
                };
                if y > 0 {
                    visit(p - self.w);
                }
                if y + 1 < self.h {
                    visit(p + self.w);
                }
                if x > 0 {
                    visit(p - 1);
                }
                if x + 1 < self.w {
                    visit(p + 1);
                }
            }
            next += 1;
        }
        (labels, next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_pixels_are_separate_components() {
        let m = Mask::new(2, 2, vec![true, false, false, true]).unwrap();
        let (labels, n) = m.components();
        assert_eq!(n, 2);
        assert_eq!(labels, vec![Some(0), None, None, Some(1)]);
    }

    #[test]
    fn l_shape_is_one_component() {
        let m = Mask::new(3, 3, vec![true, false, false, true, false, false, true, true, true]).unwrap();
        assert_eq!(m.components().1, 1);
    }

    #[test]
    fn nearest_resize_replicates_blocks() {
        let m = Mask::new(2, 2, vec![true, false, false, false]).unwrap();
        let r = m.resize_nearest(4, 4).unwrap();
        assert_eq!(r.count(), 4);
        assert!(r.get(1, 1) && !r.get(2, 2));
    }
}
