//! Noise schedules and timestep subsets.
//!
//! Timesteps are stored 0-indexed: index `k` is diffusion step `k + 1`, so a
//! schedule with `T` steps has indices `0..T`. The clean-data endpoint is not
//! an index; see [`TimePoint::Clean`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{ceil_snapped, Real};

/// Linear-β diffusion schedule with cumulative signal coefficients `ᾱ`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<T> {
    beta_start: f64,
    beta_end: f64,
    betas: Vec<T>,
    alpha_bars: Vec<T>,
}

/// A position on the diffusion time axis: the clean endpoint (`ᾱ = 1`) or a
/// trained 0-indexed timestep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimePoint {
    Clean,
    Step(usize),
}

impl<T: Real> NoiseSchedule<T> {
    /// `β` linearly interpolated from `beta_start` (first step) to
    /// `beta_end` (last step); `ᾱ_k = Π_{j≤k} (1 − β_j)`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return invalid("schedule needs at least one step");
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return invalid(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            ));
        }
        let b0 = T::lit(beta_start);
        let b1 = T::lit(beta_end);
        let betas: Vec<T> = (0..steps)
            .map(|j| {
                if steps == 1 {
                    b0
                } else {
                    b0 + (b1 - b0) * T::from_usize_lossy(j) / T::from_usize_lossy(steps - 1)
                }
            })
            .collect();
        let mut acc = T::one();
        let alpha_bars = betas
            .iter()
            .map(|&b| {
                acc *= T::one() - b;
                acc
            })
            .collect::<Vec<T>>();
        if alpha_bars.iter().any(|&a| !(a > T::zero())) {
            return Err(Error::NumericFailure("cumulative alpha underflows to zero".into()));
        }
        Ok(Self {
            beta_start,
            beta_end,
            betas,
            alpha_bars,
        })
    }

    /// Total number of trained timesteps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }

    /// `ᾱ` for indices `0..T` (the clean endpoint is not included).
    pub fn alpha_bars(&self) -> &[T] {
        &self.alpha_bars
    }

    pub fn alpha_bar(&self, step: usize) -> T {
        self.alpha_bars[step]
    }

    pub fn alpha_bar_at(&self, point: TimePoint) -> T {
        match point {
            TimePoint::Clean => T::one(),
            TimePoint::Step(k) => self.alpha_bars[k],
        }
    }

    pub fn check_step(&self, step: usize) -> Result<()> {
        if step >= self.len() {
            return invalid(format!("timestep {step} outside trained range 0..{}", self.len()));
        }
        Ok(())
    }

    pub fn check_point(&self, point: TimePoint) -> Result<()> {
        match point {
            TimePoint::Clean => Ok(()),
            TimePoint::Step(k) => self.check_step(k),
        }
    }

    /// ODE coordinate `p = √(1/ᾱ − 1)`.
    pub fn ode_p(&self, point: TimePoint) -> T {
        let a = self.alpha_bar_at(point);
        (T::one() / a - T::one()).sqrt()
    }

    /// Scaled state `y = x/√ᾱ` for a scalar `x`.
    pub fn ode_y(&self, point: TimePoint, x: T) -> T {
        x / self.alpha_bar_at(point).sqrt()
    }
}

/// Shape of the map `u ↦ g(u)` from subset position to fraction of `T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SubsetPolicy {
    #[default]
    Uniform,
    Quad,
    Cube,
    Exp,
}

impl SubsetPolicy {
    pub const ALL: [SubsetPolicy; 4] = [Self::Uniform, Self::Quad, Self::Cube, Self::Exp];

    pub fn g(self, u: f64) -> f64 {
        match self {
            Self::Uniform => u,
            Self::Quad => u * u,
            Self::Cube => u * u * u,
            Self::Exp => (5.0 * u).exp_m1() / 5.0f64.exp_m1(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Quad => "quad",
            Self::Cube => "cube",
            Self::Exp => "exp",
        }
    }
}

impl fmt::Display for SubsetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubsetPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "quad" => Ok(Self::Quad),
            "cube" => Ok(Self::Cube),
            "exp" => Ok(Self::Exp),
            other => invalid(format!("unknown subset policy '{other}'")),
        }
    }
}

/// Strictly ascending 0-indexed timesteps whose last entry is `T − 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimestepSubset {
    taus: Vec<usize>,
    total: usize,
    policy: SubsetPolicy,
    requested: usize,
}

impl TimestepSubset {
    /// `τ_i = ⌈g(i/S)·T⌉ − 1` for `i = 1..S` (0-indexed), duplicates dropped.
    /// Uniform with `T = 1000, S = 3` gives `[333, 666, 999]`. Non-uniform
    /// policies can collapse several `i` onto one step near the clean end,
    /// in which case the subset has fewer than `S` entries.
    pub fn new(total: usize, steps: usize, policy: SubsetPolicy) -> Result<Self> {
        if total == 0 {
            return invalid("total timesteps must be positive");
        }
        if steps == 0 || steps > total {
            return invalid(format!("subset size {steps} must be in 1..={total}"));
        }
        let mut taus: Vec<usize> = Vec::with_capacity(steps);
        for i in 1..=steps {
            let k = match policy {
                // exact integer ceil(i·T/S)
                SubsetPolicy::Uniform => (i * total).div_ceil(steps),
                _ => ceil_snapped(policy.g(i as f64 / steps as f64) * total as f64).max(1) as usize,
            } - 1;
            if taus.last().is_none_or(|&last| k > last) {
                taus.push(k);
            }
        }
        if *taus.last().expect("non-empty") != total - 1 {
            taus.push(total - 1);
        }
        Ok(Self {
            taus,
            total,
            policy,
            requested: steps,
        })
    }

    /// Builds a subset from explicit 0-indexed steps.
    pub fn from_steps(total: usize, taus: Vec<usize>) -> Result<Self> {
        if taus.is_empty() {
            return invalid("subset must not be empty");
        }
        if taus.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("subset must be strictly ascending");
        }
        if *taus.last().expect("non-empty") != total - 1 {
            return invalid(format!("subset must end at step {}", total - 1));
        }
        let requested = taus.len();
        Ok(Self {
            taus,
            total,
            policy: SubsetPolicy::Uniform,
            requested,
        })
    }

    pub fn steps(&self) -> &[usize] {
        &self.taus
    }

    /// Number of steps actually in the subset (`≤` the requested `S`).
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn requested(&self) -> usize {
        self.requested
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn policy(&self) -> SubsetPolicy {
        self.policy
    }

    /// 1-indexed steps (index `k` is step `k + 1`).
    pub fn one_indexed(&self) -> Vec<usize> {
        self.taus.iter().map(|k| k + 1).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_alpha_bar_is_one_minus_beta() {
        let s = NoiseSchedule::<f64>::linear(1000, 1e-4, 0.02).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0 - 1e-4);
        assert_eq!(s.alpha_bar_at(TimePoint::Clean), 1.0);
        assert_eq!(s.betas()[999], 0.02);
    }

    #[test]
    fn last_alpha_bar_matches_reference_product() {
        // mpmath at 50 digits, tests/oracles/schedule_oracle.py
        let s = NoiseSchedule::<f64>::linear(1000, 1e-4, 0.02).unwrap();
        assert!((s.alpha_bar(999) - 0.000040358297653756833148).abs() < 1e-12);
        assert!((s.alpha_bar(332) - 0.32078480599346840948).abs() < 1e-12);
    }

    #[test]
    fn invalid_schedules() {
        assert!(NoiseSchedule::<f64>::linear(0, 1e-4, 0.02).is_err());
        assert!(NoiseSchedule::<f64>::linear(10, 0.0, 0.02).is_err());
        assert!(NoiseSchedule::<f64>::linear(10, 0.03, 0.02).is_err());
        assert!(NoiseSchedule::<f64>::linear(10, 1e-4, 1.0).is_err());
        let one = NoiseSchedule::<f64>::linear(1, 0.5, 0.5).unwrap();
        assert_eq!(one.alpha_bars(), &[0.5]);
    }

    #[test]
    fn ode_coordinates() {
        let s = NoiseSchedule::<f64>::linear(10, 0.1, 0.5).unwrap();
        assert_eq!(s.ode_p(TimePoint::Clean), 0.0);
        let a = s.alpha_bar(3);
        assert!((s.ode_p(TimePoint::Step(3)) - (1.0 / a - 1.0).sqrt()).abs() < 1e-15);
        assert!((s.ode_y(TimePoint::Step(3), 2.0) - 2.0 / a.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn uniform_three_step_subset() {
        let s = TimestepSubset::new(1000, 3, SubsetPolicy::Uniform).unwrap();
        assert_eq!(s.steps(), &[333, 666, 999]);
        assert_eq!(s.one_indexed(), vec![334, 667, 1000]);
    }

    #[test]
    fn full_uniform_subset_is_identity() {
        let s = TimestepSubset::new(1000, 1000, SubsetPolicy::Uniform).unwrap();
        assert_eq!(s.steps(), (0..1000).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn nonuniform_three_step_subsets() {
        // ⌈1000/9⌉ = 112, ⌈4000/9⌉ = 445; cube: ⌈1000/27⌉ = 38, ⌈8000/27⌉ = 297;
        // exp: ⌈1000·(e^{5/3}−1)/(e⁵−1)⌉ = 30, ⌈1000·(e^{10/3}−1)/(e⁵−1)⌉ = 184.
        let q = TimestepSubset::new(1000, 3, SubsetPolicy::Quad).unwrap();
        assert_eq!(q.steps(), &[111, 444, 999]);
        let c = TimestepSubset::new(1000, 3, SubsetPolicy::Cube).unwrap();
        assert_eq!(c.steps(), &[37, 296, 999]);
        let e = TimestepSubset::new(1000, 3, SubsetPolicy::Exp).unwrap();
        assert_eq!(e.steps(), &[29, 183, 999]);
    }

    #[test]
    fn dense_quad_subset_deduplicates() {
        let q = TimestepSubset::new(1000, 1000, SubsetPolicy::Quad).unwrap();
        assert_eq!(q.len(), 750);
        assert_eq!(q.requested(), 1000);
    }

    #[test]
    fn subset_errors() {
        assert!(TimestepSubset::new(10, 11, SubsetPolicy::Uniform).is_err());
        assert!(TimestepSubset::new(10, 0, SubsetPolicy::Uniform).is_err());
        assert!("cosine".parse::<SubsetPolicy>().is_err());
        assert!(TimestepSubset::from_steps(10, vec![3, 3, 9]).is_err());
        assert!(TimestepSubset::from_steps(10, vec![3, 8]).is_err());
    }

    proptest! {
        #[test]
        fn subsets_ascend_and_end_at_last_step(total in 1usize..2000, frac in 0.0f64..1.0, p in 0usize..4) {
            let steps = 1 + ((total - 1) as f64 * frac) as usize;
            let s = TimestepSubset::new(total, steps, SubsetPolicy::ALL[p]).unwrap();
            prop_assert!(s.steps().windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(*s.steps().last().unwrap(), total - 1);
            prop_assert!(s.len() <= steps);
        }

        #[test]
        fn alpha_bar_strictly_decreasing(total in 1usize..3000, b0 in 1e-6f64..0.02, span in 0.0f64..0.05) {
            let b1 = b0 + span;
            let s = NoiseSchedule::<f64>::linear(total, b0, b1).unwrap();
            let a = s.alpha_bars();
            prop_assert!(a[0] < 1.0 && a[0] > 0.0);
            prop_assert!(a.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
        }
    }
}
