use crate::epsnet::EpsilonModel;
use crate::error::{invalid, Result};
use crate::numerics::{Real, Tensor};
use crate::schedule::NoiseSchedule;

/// Exact noise predictor for data distributed `N(μ, σ²I)`.
///
/// The marginal at step `t` is `N(√ᾱ μ, (ᾱσ² + 1 − ᾱ) I)`, so the optimal
/// ε-prediction `−√(1−ᾱ) ∇log q_t` is
/// `√(1−ᾱ) (x − √ᾱ μ) / (ᾱσ² + 1 − ᾱ)`.
#[derive(Clone, Debug)]
pub struct AnalyticGaussianModel<T> {
    mean: Tensor<T>,
    var: T,
    schedule: NoiseSchedule<T>,
}

impl<T: Real> AnalyticGaussianModel<T> {
    pub fn new(mean: Tensor<T>, var: T, schedule: NoiseSchedule<T>) -> Result<Self> {
        if !(var > T::zero()) || !var.is_finite() {
            return invalid("data variance must be positive and finite");
        }
        Ok(Self { mean, var, schedule })
    }

    /// Same scalar mean at every element.
    pub fn isotropic(shape: &[usize], mean: T, var: T, schedule: NoiseSchedule<T>) -> Result<Self> {
        Self::new(Tensor::full(shape, mean), var, schedule)
    }

    /// `N(0, I)` data, for which the optimal prediction is `√(1−ᾱ)·x`.
    pub fn standard_normal(shape: &[usize], schedule: NoiseSchedule<T>) -> Self {
        Self {
            mean: Tensor::zeros(shape),
            var: T::one(),
            schedule,
        }
    }

    pub fn mean(&self) -> &Tensor<T> {
        &self.mean
    }

    pub fn var(&self) -> T {
        self.var
    }

    pub fn schedule(&self) -> &NoiseSchedule<T> {
        &self.schedule
    }
}

impl<T: Real> EpsilonModel<T> for AnalyticGaussianModel<T> {
    fn sample_shape(&self) -> &[usize] {
        self.mean.shape()
    }

    fn timesteps(&self) -> usize {
        self.schedule.len()
    }

    fn predict(&self, x: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
        self.check_input(x, t)?;
        let a = self.schedule.alpha_bar(t);
        let sa = a.sqrt();
        let k = (T::one() - a).sqrt() / (a * self.var + T::one() - a);
        x.zip_map(&self.mean, |xv, mv| k * (xv - sa * mv))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, Rng};

    fn sched() -> NoiseSchedule<f64> {
        NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap()
    }

    /// Step whose ᾱ is closest to `target`.
    fn step_near(s: &NoiseSchedule<f64>, target: f64) -> usize {
        (0..s.len())
            .min_by(|&a, &b| {
                (s.alpha_bar(a) - target)
                    .abs()
                    .partial_cmp(&(s.alpha_bar(b) - target).abs())
                    .unwrap()
            })
            .unwrap()
    }

    #[test]
    fn standard_normal_scales_by_noise_level() {
        let s = sched();
        let t = step_near(&s, 0.5);
        let a = s.alpha_bar(t);
        let m = AnalyticGaussianModel::standard_normal(&[2], s);
        let x = Tensor::new(&[2], vec![1.0, 0.0]).unwrap();
        let e = m.predict(&x, t).unwrap();
        assert!((e.data()[0] - (1.0 - a).sqrt()).abs() < 1e-15);
        assert_eq!(e.data()[1], 0.0);
        // ᾱ is only near 0.5; the example value √0.5 holds to the schedule's grid spacing
        assert!((e.data()[0] - 0.5f64.sqrt()).abs() < 2e-3);
    }

    #[test]
    fn scaled_mean_maps_to_zero_noise() {
        let s = sched();
        let a = s.alpha_bar(400);
        let mu = Tensor::new(&[3], vec![0.3, -1.0, 2.0]).unwrap();
        let m = AnalyticGaussianModel::new(mu.clone(), 0.7, s).unwrap();
        let e = m.predict(&mu.scale(a.sqrt()), 400).unwrap();
        assert!(e.data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn matches_numerical_score_of_marginal() {
        let s = sched();
        let (mu, var) = (1.0, 4.0);
        let m = AnalyticGaussianModel::isotropic(&[5], mu, var, s.clone()).unwrap();
        let mut rng = Rng::new(17, 0);
        for &t in &[0usize, 250, 999] {
            let x = rng.normal_tensor::<f64>(&[5]);
            let a = s.alpha_bar(t);
            let v = a * var + 1.0 - a;
            let log_q = |z: &Tensor<f64>| -> f64 {
                z.data()
                    .iter()
                    .map(|&zi| -0.5 * (zi - a.sqrt() * mu).powi(2) / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln())
                    .sum()
            };
            let score = finite_diff_grad(log_q, &x, 1e-5).unwrap();
            let e = m.predict(&x, t).unwrap();
            for (ei, si) in e.data().iter().zip(score.data()) {
                assert!((ei + (1.0 - a).sqrt() * si).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn linearity_about_scaled_mean() {
        let s = sched();
        let a = s.alpha_bar(600);
        let mu = Tensor::new(&[4], vec![1.0, 2.0, -1.0, 0.0]).unwrap();
        let m = AnalyticGaussianModel::new(mu.clone(), 2.0, s).unwrap();
        let x = Tensor::new(&[4], vec![0.4, -0.2, 3.0, 1.0]).unwrap();
        let c = mu.scale(a.sqrt());
        let k = -1.7;
        let moved = x.sub(&c).unwrap().scale(k).add(&c).unwrap();
        let lhs = m.predict(&moved, 600).unwrap();
        let rhs = m.predict(&x, 600).unwrap().scale(k);
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = sched();
        assert!(AnalyticGaussianModel::isotropic(&[2], 0.0, 0.0, s.clone()).is_err());
        let m = AnalyticGaussianModel::standard_normal(&[2], s);
        assert!(m.predict(&Tensor::zeros(&[3]), 0).is_err());
        assert!(m.predict(&Tensor::zeros(&[2]), 1000).is_err());
    }
}
