//! Reference implementations used as test oracles. Written for clarity and
//! independence from the crate's fast paths, not for speed.
#![allow(dead_code)]

use inversion_ad::numerics::Tensor;
use inversion_ad::schedule::SubsetPolicy;
use inversion_ad::{Mask, Rng};

/// Inversion contraction `λ` of the standard-normal analytic model on the
/// T=1000 linear schedule, from the 50-digit script in `tests/oracles`.
pub const LAMBDA_TABLE: [(SubsetPolicy, usize, f64); 12] = [
    (SubsetPolicy::Uniform, 3, 0.50158497938075889789),
    (SubsetPolicy::Uniform, 10, 0.83217937289872454869),
    (SubsetPolicy::Uniform, 1000, 0.99822411141799651724),
    (SubsetPolicy::Quad, 3, 0.58834184184563162924),
    (SubsetPolicy::Quad, 10, 0.85375053854564040565),
    (SubsetPolicy::Quad, 1000, 0.99797340064305925216),
    (SubsetPolicy::Cube, 3, 0.56417180327064713771),
    (SubsetPolicy::Cube, 10, 0.82941986920589555306),
    (SubsetPolicy::Cube, 1000, 0.99769327789920690668),
    (SubsetPolicy::Exp, 3, 0.48937022899476997113),
    (SubsetPolicy::Exp, 10, 0.81353852115310246534),
    (SubsetPolicy::Exp, 1000, 0.9974168800527815476),
];

/// Pair-counting AU-ROC with ½ credit for ties.
pub fn brute_auroc(s: &[f64], l: &[bool]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] && !l[j] {
                pairs += 1;
                if s[i] > s[j] {
                    twice += 2;
                } else if s[i] == s[j] {
                    twice += 1;
                }
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

/// AP from each positive's rank, ranking by score descending and index ascending.
pub fn brute_ap(s: &[f64], l: &[bool]) -> f64 {
    let before = |j: usize, i: usize| s[j] > s[i] || (s[j] == s[i] && j < i);
    let mut at_rank: Vec<(usize, f64)> = Vec::new();
    for i in (0..s.len()).filter(|&i| l[i]) {
        let rank = 1 + (0..s.len()).filter(|&j| before(j, i)).count();
        let tp = 1 + (0..s.len()).filter(|&j| l[j] && before(j, i)).count();
        at_rank.push((rank, tp as f64 / rank as f64));
    }
    at_rank.sort_by_key(|p| p.0);
    at_rank.iter().map(|p| p.1).sum::<f64>() / at_rank.len() as f64
}

/// Best F1 over every distinct score used as a `≥` threshold.
pub fn brute_f1(s: &[f64], l: &[bool]) -> f64 {
    let mut best: f64 = 0.0;
    for &thr in s {
        let (mut tp, mut fp, mut fne) = (0u64, 0u64, 0u64);
        for (&v, &y) in s.iter().zip(l) {
            match (v >= thr, y) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fne += 1,
                _ => {}
            }
        }
        best = best.max((2 * tp) as f64 / (2 * tp + fp + fne) as f64);
    }
    best
}

/// 4-connected regions by depth-first flood fill; returns pixel lists.
pub fn flood_regions(m: &Mask) -> Vec<Vec<usize>> {
    let (h, w) = (m.height(), m.width());
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for start in 0..h * w {
        if !m.bits()[start] || seen[start] {
            continue;
        }
        let mut region = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(p) = stack.pop() {
            region.push(p);
            let (y, x) = (p / w, p % w);
            let mut nb = Vec::new();
            if y > 0 {
                nb.push(p - w);
            }
            if y + 1 < h {
                nb.push(p + w);
            }
            if x > 0 {
                nb.push(p - 1);
            }
            if x + 1 < w {
                nb.push(p + 1);
            }
            for q in nb {
                if m.bits()[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        out.push(region);
    }
    out
}

/// AU-PRO by recomputing (FPR, PRO) from scratch at every distinct threshold,
/// integrating by trapezoids and interpolating at the cap.
pub fn brute_aupro(maps: &[Tensor<f64>], masks: &[Mask], cap: f64) -> f64 {
    let regions: Vec<(usize, Vec<usize>)> = masks
        .iter()
        .enumerate()
        .flat_map(|(k, m)| flood_regions(m).into_iter().map(move |r| (k, r)))
        .collect();
    let negatives: usize = masks.iter().map(|m| m.bits().iter().filter(|&&b| !b).count()).sum();
    let mut thresholds: Vec<f64> = maps.iter().flat_map(|m| m.data().to_vec()).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut pts = vec![(0.0, 0.0)];
    for &thr in &thresholds {
        let fp: usize = maps
            .iter()
            .zip(masks)
            .map(|(m, k)| m.data().iter().zip(k.bits()).filter(|(&v, &b)| !b && v >= thr).count())
            .sum();
        let pro = regions
            .iter()
            .map(|(k, r)| r.iter().filter(|&&p| maps[*k].data()[p] >= thr).count() as f64 / r.len() as f64)
            .sum::<f64>()
            / regions.len() as f64;
        pts.push((fp as f64 / negatives as f64, pro));
    }
    let mut area = 0.0;
    for w in pts.windows(2) {
        let ((f0, p0), (f1, p1)) = (w[0], w[1]);
        if f0 >= cap {
            break;
        }
        if f1 <= cap {
            area += (f1 - f0) * (p0 + p1) / 2.0;
        } else {
            let pc = p0 + (p1 - p0) * (cap - f0) / (f1 - f0);
            area += (cap - f0) * (p0 + pc) / 2.0;
            break;
        }
    }
    area / cap
}

/// Random scored set of size `2..=max_n` with both classes present and
/// scores from a small grid (so ties occur) or continuous.
pub fn random_scored(rng: &mut Rng, max_n: usize) -> (Vec<f64>, Vec<bool>) {
    loop {
        let n = 2 + rng.below(max_n - 1);
        let coarse = rng.below(2) == 0;
        let s: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    rng.below(5) as f64 / 4.0
                } else {
                    rng.normal()
                }
            })
            .collect();
        let l: Vec<bool> = (0..n).map(|_| rng.below(3) == 0).collect();
        if l.iter().any(|&b| b) && l.iter().any(|&b| !b) {
            return (s, l);
        }
    }
}

/// Random maps and masks of size `h×w`: blob masks from a few rectangles,
/// maps uniform noise with optional coarse quantization.
pub fn random_localization(rng: &mut Rng, n: usize, h: usize, w: usize) -> (Vec<Tensor<f64>>, Vec<Mask>) {
    loop {
        let mut maps = Vec::new();
        let mut masks = Vec::new();
        for _ in 0..n {
            let mut m = Mask::empty(h, w);
            for _ in 0..rng.below(3) {
                let (rh, rw) = (1 + rng.below(4), 1 + rng.below(4));
                let (y0, x0) = (rng.below(h - rh + 1), rng.below(w - rw + 1));
                for y in y0..y0 + rh {
                    for x in x0..x0 + rw {
                        m.set(y, x, true);
                    }
                }
            }
            let coarse = rng.below(2) == 0;
            let map = Tensor::from_fn(&[h, w], |i| {
                let boost = if m.bits()[i] { 0.3 } else { 0.0 };
                let v = rng.uniform() + boost;
                if coarse {
                    (v * 8.0).floor() / 8.0
                } else {
                    v
                }
            });
            maps.push(map);
            masks.push(m);
        }
        if masks.iter().any(|m| !m.is_empty()) {
            return (maps, masks);
        }
    }
}
