//! Reverse-mode gradients checked against central finite differences.

use crate::epsnet::{MlpEpsModel, TrainingBatch};
use crate::error::{invalid, Result};
use crate::numerics::Rng;

/// Denominator floor for the relative error, so parameters whose true
/// gradient is (numerically) zero are judged on absolute error instead.
pub const REL_ERR_FLOOR: f64 = 1e-6;

const FD_STEP: f64 = 1e-3;
const MAX_PARAMS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |a − n| / max(|a|, |n|, REL_ERR_FLOOR)` over all parameters.
    pub max_rel_error: f64,
    pub worst_index: usize,
    /// Layer holding the worst parameter, when known.
    pub worst_layer: Option<String>,
    pub n_params: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Compares two gradient vectors entrywise.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64], tol: f64) -> Result<GradCheckReport> {
    if analytic.len() != numeric.len() {
        return invalid(format!(
            "gradient lengths differ: {} vs {}",
            analytic.len(),
            numeric.len()
        ));
    }
    let mut worst = (0.0, 0);
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let e = (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_FLOOR);
        if !(e <= worst.0) {
            worst = (e, i);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        worst_layer: None,
        n_params: analytic.len(),
        tol,
        passed: worst.0 < tol,
    })
}

/// A reproducible batch of noised standard-normal inputs for the model's shape.
pub fn fixed_batch(model: &MlpEpsModel<f64>, rows: usize, seed: u64) -> TrainingBatch<f64> {
    use crate::epsnet::EpsilonModel;
    let d = model.input_dim();
    let mut rng = Rng::new(seed, 0);
    let noisy = (0..rows * d).map(|_| rng.normal()).collect();
    let noise = (0..rows * d).map(|_| rng.normal()).collect();
    let steps = (0..rows).map(|_| rng.below(model.timesteps())).collect();
    TrainingBatch { noisy, steps, noise }
}

/// Fourth-order central differences of the batch loss with respect to
/// every parameter: `(8(L(+h) − L(−h)) − (L(+2h) − L(−2h))) / 12h`.
pub fn numeric_gradient(model: &MlpEpsModel<f64>, batch: &TrainingBatch<f64>, h: f64) -> Vec<f64> {
    let mut probe = model.clone();
    let base = model.params().to_vec();
    let mut out = Vec::with_capacity(base.len());
    for (i, &p) in base.iter().enumerate() {
        let mut at = |v: f64| {
            probe.params_mut()[i] = v;
            probe.loss(batch)
        };
        let d1 = at(p + h) - at(p - h);
        let d2 = at(p + 2.0 * h) - at(p - 2.0 * h);
        probe.params_mut()[i] = p;
        out.push((8.0 * d1 - d2) / (12.0 * h));
    }
    out
}

/// Checks [`MlpEpsModel::loss_and_grad`] on a fixed batch against finite
/// differences. Intended for tiny models (at most 10⁴ parameters).
pub fn grad_check(model: &MlpEpsModel<f64>, tol: f64, seed: u64) -> Result<GradCheckReport> {
    if model.num_params() > MAX_PARAMS {
        return invalid(format!(
            "gradient check limited to {MAX_PARAMS} parameters, model has {}",
            model.num_params()
        ));
    }
    let batch = fixed_batch(model, 3, seed);
    let (_, analytic) = model.loss_and_grad(&batch);
    let numeric = numeric_gradient(model, &batch, FD_STEP);
    let mut report = compare_gradients(&analytic, &numeric, tol)?;
    report.worst_layer = model
        .layer_ranges()
        .into_iter()
        .find(|(_, r)| r.contains(&report.worst_index))
        .map(|(n, _)| n);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epsnet::MlpConfig;

    fn tiny(seed: u64) -> MlpEpsModel<f64> {
        let cfg = MlpConfig {
            depth: 2,
            width: 5,
            time_dim: 4,
        };
        let mut rng = Rng::new(seed, 9);
        let mut m = MlpEpsModel::new(&[2, 2, 1], 100, cfg, &mut rng).unwrap();
        m.randomize(&mut rng, 0.5);
        m
    }

    #[test]
    fn random_tiny_model_passes() {
        let r = grad_check(&tiny(1), 1e-4, 7).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn corrupted_layer_fails() {
        let m = tiny(2);
        let batch = fixed_batch(&m, 3, 7);
        let (_, mut g) = m.loss_and_grad(&batch);
        let numeric = numeric_gradient(&m, &batch, FD_STEP);
        let (_, range) = m.layer_ranges().into_iter().find(|(n, _)| n == "block1.fc1").unwrap();
        for v in &mut g[range] {
            *v *= 1.01;
        }
        assert!(!compare_gradients(&g, &numeric, 1e-4).unwrap().passed);
    }

    #[test]
    fn oversized_model_rejected() {
        let m = MlpEpsModel::<f64>::zeroed(&[64], 10, MlpConfig::default()).unwrap();
        assert!(grad_check(&m, 1e-4, 0).is_err());
    }
}
