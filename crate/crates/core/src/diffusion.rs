//! Forward noising, deterministic DDIM sampling and inversion, and the
//! reconstruction baseline.
//!
//! Both DDIM directions share one update. From a point with coefficient `ᾱ_c`
//! and noise estimate `ε`, the clean estimate is `f = (x − √(1−ᾱ_c)·ε)/√ᾱ_c`
//! and the state at `ᾱ_n` is `√ᾱ_n·f + √(1−ᾱ_n)·ε`. Inversion walks
//! `clean → τ_1 → … → τ_S`; sampling walks the same points backwards. At the
//! clean endpoint (`ᾱ = 1`) the model is queried at step 0, the smallest
//! trained timestep.

use crate::epsnet::EpsilonModel;
use crate::error::{invalid, Result};
use crate::numerics::{floor_snapped, Real, Rng, Tensor};
use crate::schedule::{NoiseSchedule, TimePoint, TimestepSubset};

/// `√ᾱ_t·x0 + √(1−ᾱ_t)·ε`.
pub fn q_sample<T: Real>(schedule: &NoiseSchedule<T>, x0: &Tensor<T>, t: usize, eps: &Tensor<T>) -> Result<Tensor<T>> {
    schedule.check_step(t)?;
    let ab = schedule.alpha_bar(t);
    x0.lin_comb(ab.sqrt(), eps, (T::one() - ab).sqrt())
}

fn ddim_move<T: Real>(x: &Tensor<T>, eps: &Tensor<T>, ab_cur: T, ab_next: T) -> Result<Tensor<T>> {
    let s_cur = (T::one() - ab_cur).sqrt();
    let s_next = (T::one() - ab_next).sqrt();
    let a_cur = ab_cur.sqrt();
    let a_next = ab_next.sqrt();
    x.zip_map(eps, |xv, ev| a_next * ((xv - s_cur * ev) / a_cur) + s_next * ev)
}

fn eval_step(point: TimePoint) -> usize {
    match point {
        TimePoint::Clean => 0,
        TimePoint::Step(k) => k,
    }
}

/// One reverse step from `from` (noisier) to `to`. `from == to` is the identity.
pub fn ddim_reverse_step<T: Real, M: EpsilonModel<T>>(
    model: &M,
    schedule: &NoiseSchedule<T>,
    x: &Tensor<T>,
    from: TimePoint,
    to: TimePoint,
) -> Result<Tensor<T>> {
    schedule.check_point(from)?;
    schedule.check_point(to)?;
    if from == to {
        return Ok(x.clone());
    }
    let TimePoint::Step(t) = from else {
        return invalid("reverse step must start at a trained timestep");
    };
    if to > from {
        return invalid(format!(
            "reverse step must move towards clean data, got {from:?} -> {to:?}"
        ));
    }
    let eps = model.predict(x, t)?;
    ddim_move(x, &eps, schedule.alpha_bar(t), schedule.alpha_bar_at(to))?.check_finite("DDIM reverse step")
}

/// One inversion step from `from` to the noisier `to`. `from == to` is the identity.
pub fn ddim_invert_step<T: Real, M: EpsilonModel<T>>(
    model: &M,
    schedule: &NoiseSchedule<T>,
    x: &Tensor<T>,
    from: TimePoint,
    to: TimePoint,
) -> Result<Tensor<T>> {
    schedule.check_point(from)?;
    schedule.check_point(to)?;
    if from == to {
        return Ok(x.clone());
    }
    if to < from {
        return invalid(format!(
            "inversion step must move towards noise, got {from:?} -> {to:?}"
        ));
    }
    let eps = model.predict(x, eval_step(from))?;
    ddim_move(x, &eps, schedule.alpha_bar_at(from), schedule.alpha_bar_at(to))?.check_finite("DDIM inversion step")
}

fn points(subset: &TimestepSubset) -> Vec<TimePoint> {
    std::iter::once(TimePoint::Clean)
        .chain(subset.steps().iter().map(|&k| TimePoint::Step(k)))
        .collect()
}

fn check_subset<T: Real>(schedule: &NoiseSchedule<T>, subset: &TimestepSubset) -> Result<()> {
    if subset.total() != schedule.len() {
        return invalid(format!(
            "subset built for T={} but schedule has T={}",
            subset.total(),
            schedule.len()
        ));
    }
    Ok(())
}

/// Deterministic sampling from `x_T` down the subset to the clean endpoint.
/// One model evaluation per subset step.
pub fn ddim_sample<T: Real, M: EpsilonModel<T>>(
    model: &M,
    schedule: &NoiseSchedule<T>,
    x_t: &Tensor<T>,
    subset: &TimestepSubset,
) -> Result<Tensor<T>> {
    check_subset(schedule, subset)?;
    let pts = points(subset);
    let mut x = x_t.clone();
    for i in (1..pts.len()).rev() {
        x = ddim_reverse_step(model, schedule, &x, pts[i], pts[i - 1])?;
    }
    Ok(x)
}

/// Deterministic inversion of a clean latent to `z_T` along the subset.
/// One model evaluation per subset step.
pub fn invert<T: Real, M: EpsilonModel<T>>(
    model: &M,
    schedule: &NoiseSchedule<T>,
    z0: &Tensor<T>,
    subset: &TimestepSubset,
) -> Result<Tensor<T>> {
    check_subset(schedule, subset)?;
    let pts = points(subset);
    let mut x = z0.clone();
    for w in pts.windows(2) {
        x = ddim_invert_step(model, schedule, &x, w[0], w[1])?;
    }
    Ok(x)
}

/// Perturbation depth `k = ⌊r·S⌋` for the reconstruction baseline, or `None`
/// when `r·S < 1` (no step to perturb to).
pub fn perturbation_index(r: f64, steps: usize) -> Result<Option<usize>> {
    if !(r > 0.0 && r <= 1.0) {
        return invalid(format!("perturbation ratio must be in (0, 1], got {r}"));
    }
    let k = floor_snapped(r * steps as f64);
    Ok((k >= 1).then_some(k as usize))
}

/// Reconstruction baseline: noise `z0` to `τ_k` with fresh noise from `rng`,
/// then denoise back along `τ_k, …, τ_1, clean`.
pub fn reconstruct<T: Real, M: EpsilonModel<T>>(
    model: &M,
    schedule: &NoiseSchedule<T>,
    z0: &Tensor<T>,
    subset: &TimestepSubset,
    r: f64,
    rng: &mut Rng,
) -> Result<Tensor<T>> {
    let Some(k) = perturbation_index(r, subset.len())? else {
        return invalid(format!(
            "ratio {r} selects no perturbation step for a {}-step subset",
            subset.len()
        ));
    };
    let noise = rng.normal_tensor(z0.shape());
    reconstruct_with_noise(model, schedule, z0, subset, k, &noise)
}

/// [`reconstruct`] at explicit depth `k` (1-based position in the subset) and noise.
pub fn reconstruct_with_noise<T: Real, M: EpsilonModel<T>>(
    model: &M,
    schedule: &NoiseSchedule<T>,
    z0: &Tensor<T>,
    subset: &TimestepSubset,
    k: usize,
    noise: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_subset(schedule, subset)?;
    if k == 0 || k > subset.len() {
        return invalid(format!("perturbation depth {k} outside 1..={}", subset.len()));
    }
    let pts = points(subset);
    let mut x = q_sample(schedule, z0, subset.steps()[k - 1], noise)?;
    for i in (1..=k).rev() {
        x = ddim_reverse_step(model, schedule, &x, pts[i], pts[i - 1])?;
    }
    Ok(x)
}
