//! ε-prediction training: uniform timesteps (stratified per epoch), unit loss
//! weights, AdamW with a warmup + cosine learning-rate schedule and
//! global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::epsnet::{EpsilonModel, MlpConfig, MlpEpsModel, TrainingBatch};
use crate::error::{invalid, Error, Result};
use crate::numerics::{Real, Rng, Tensor};
use crate::schedule::NoiseSchedule;

/// Training hyperparameters. The learning-rate ratios (initial 1/50 and
/// final 1/10 of peak, warmup over the first ~13% of epochs, no weight decay)
/// follow the reference recipe; epochs, batch size and the peak rate are
/// shrunk to desk scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub peak_lr: f64,
    pub final_lr: f64,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    pub model: MlpConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            initial_lr: 4e-5,
            peak_lr: 2e-3,
            final_lr: 2e-4,
            warmup_epochs: 8,
            weight_decay: 0.0,
            grad_clip: 1.0,
            seed: 0,
            model: MlpConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return invalid("epochs must be positive");
        }
        if self.batch_size == 0 {
            return invalid("batch size must be positive");
        }
        for (name, v) in [
            ("initial_lr", self.initial_lr),
            ("peak_lr", self.peak_lr),
            ("final_lr", self.final_lr),
            ("weight_decay", self.weight_decay),
            ("grad_clip", self.grad_clip),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(format!("{name} must be finite and non-negative"));
            }
        }
        if self.warmup_epochs > self.epochs {
            return invalid("warmup epochs exceed total epochs");
        }
        self.model.validate()
    }

    /// Learning rate at optimizer step `step` of `total` (`warmup` of them warming up).
    pub fn lr_at(&self, step: usize, warmup: usize, total: usize) -> f64 {
        if step < warmup {
            let u = step as f64 / warmup as f64;
            return self.initial_lr + (self.peak_lr - self.initial_lr) * u;
        }
        let span = (total - warmup).max(1) as f64;
        let u = ((step - warmup) as f64 / span).min(1.0);
        self.final_lr + 0.5 * (self.peak_lr - self.final_lr) * (1.0 + (std::f64::consts::PI * u).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-batch MSE (per element) over the epoch.
    pub loss: f64,
    /// Learning rate at the last step of the epoch.
    pub lr: f64,
}

struct AdamW<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> AdamW<T> {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [T], grads: &[T], lr: f64, wd: f64) {
        self.t += 1;
        let (b1, b2) = (T::lit(Self::B1), T::lit(Self::B2));
        let c1 = T::lit(1.0 - Self::B1.powi(self.t));
        let c2 = T::lit(1.0 - Self::B2.powi(self.t));
        let (lr, wd, eps) = (T::lit(lr), T::lit(wd), T::lit(Self::EPS));
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * (mh / (vh.sqrt() + eps) + wd * *p);
        }
    }
}

fn flatten_checked<T: Real>(normals: &[Tensor<T>]) -> Result<(Vec<usize>, usize)> {
    let first = normals
        .first()
        .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
    let shape = first.shape().to_vec();
    for (i, x) in normals.iter().enumerate() {
        if x.shape() != shape.as_slice() {
            return invalid(format!(
                "training sample {i} has shape {:?}, expected {shape:?}",
                x.shape()
            ));
        }
    }
    Ok((shape, first.len()))
}

/// Draws `x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε` for each row with the given steps.
fn noised_batch<T: Real>(
    rows: &[&Tensor<T>],
    steps: Vec<usize>,
    schedule: &NoiseSchedule<T>,
    rng: &mut Rng,
) -> TrainingBatch<T> {
    let d = rows[0].len();
    let mut noisy = Vec::with_capacity(rows.len() * d);
    let mut noise = Vec::with_capacity(rows.len() * d);
    for (x0, &t) in rows.iter().zip(&steps) {
        let ab = schedule.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (T::one() - ab).sqrt());
        for &v in x0.data() {
            let e = T::lit(rng.normal());
            noise.push(e);
            noisy.push(a * v + b * e);
        }
    }
    TrainingBatch { noisy, steps, noise }
}

/// `n` timesteps for one epoch: draw `k` is uniform within the `k`-th of
/// `n` equal strata of `[0, T)`, then the draws are shuffled. Each draw is
/// marginally uniform over all timesteps while the epoch as a whole covers
/// the range evenly.
fn stratified_steps(n: usize, total: usize, rng: &mut Rng) -> Vec<usize> {
    let mut steps: Vec<usize> = (0..n)
        .map(|k| {
            let u = (k as f64 + rng.uniform()) / n as f64;
            ((u * total as f64) as usize).min(total - 1)
        })
        .collect();
    rng.shuffle(&mut steps);
    steps
}

/// Trains a fresh MLP on normal samples. Deterministic given `cfg.seed`.
pub fn train_eps<T: Real>(
    normals: &[Tensor<T>],
    schedule: &NoiseSchedule<T>,
    cfg: &TrainConfig,
) -> Result<(MlpEpsModel<T>, Vec<EpochLog>)> {
    train_eps_with(normals, schedule, cfg, |_| {})
}

/// [`train_eps`] with a callback invoked after every epoch.
pub fn train_eps_with<T: Real>(
    normals: &[Tensor<T>],
    schedule: &NoiseSchedule<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(MlpEpsModel<T>, Vec<EpochLog>)> {
    cfg.validate()?;
    let (shape, _) = flatten_checked(normals)?;
    let mut init_rng = Rng::new(cfg.seed, 0);
    let mut model = MlpEpsModel::new(&shape, schedule.len(), cfg.model, &mut init_rng)?;
    let mut order_rng = Rng::new(cfg.seed, 1);
    let mut noise_rng = Rng::new(cfg.seed, 2);

    let n = normals.len();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let warmup = per_epoch * cfg.warmup_epochs;
    let mut opt = AdamW::new(model.num_params());
    let mut order: Vec<usize> = (0..n).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut sum = 0.0;
        let mut lr = cfg.initial_lr;
        let epoch_steps = stratified_steps(n, schedule.len(), &mut noise_rng);
        for (chunk, steps) in order.chunks(cfg.batch_size).zip(epoch_steps.chunks(cfg.batch_size)) {
            let rows: Vec<&Tensor<T>> = chunk.iter().map(|&i| &normals[i]).collect();
            let steps = steps.to_vec();
            let batch = noised_batch(&rows, steps, schedule, &mut noise_rng);
            let (loss, mut grads) = model.loss_and_grad(&batch);
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::NumericFailure(format!(
                    "training loss became non-finite in epoch {epoch}"
                )));
            }
            let norm = grads.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::NumericFailure(format!(
                    "gradient norm became non-finite in epoch {epoch}"
                )));
            }
            if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
                let k = T::lit(cfg.grad_clip / norm);
                grads.iter_mut().for_each(|g| *g *= k);
            }
            lr = cfg.lr_at(step, warmup, total);
            opt.step(model.params_mut(), &grads, lr, cfg.weight_decay);
            sum += loss;
            step += 1;
        }
        let log = EpochLog {
            epoch,
            loss: sum / per_epoch as f64,
            lr,
        };
        log::debug!("epoch {epoch}: loss {:.6} lr {:.3e}", log.loss, log.lr);
        on_epoch(&log);
        logs.push(log);
    }
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::NumericFailure(format!(
            "parameters became non-finite by epoch {}",
            cfg.epochs - 1
        )));
    }
    Ok((model, logs))
}

/// Monte-Carlo estimate of the ε-prediction objective on one batch of clean
/// samples: mean over rows of `‖ε_θ(x_t, t) − ε‖²` with `t` uniform.
pub fn epoch_loss<T: Real, M: EpsilonModel<T>>(
    model: &M,
    batch: &[Tensor<T>],
    schedule: &NoiseSchedule<T>,
    rng: &mut Rng,
) -> Result<f64> {
    loss_impl(model, batch, schedule, rng, None)
}

/// [`epoch_loss`] with every row at the fixed timestep `t`.
pub fn epoch_loss_at<T: Real, M: EpsilonModel<T>>(
    model: &M,
    batch: &[Tensor<T>],
    schedule: &NoiseSchedule<T>,
    t: usize,
    rng: &mut Rng,
) -> Result<f64> {
    schedule.check_step(t)?;
    loss_impl(model, batch, schedule, rng, Some(t))
}

fn loss_impl<T: Real, M: EpsilonModel<T>>(
    model: &M,
    batch: &[Tensor<T>],
    schedule: &NoiseSchedule<T>,
    rng: &mut Rng,
    fixed: Option<usize>,
) -> Result<f64> {
    flatten_checked(batch)?;
    let mut total = 0.0;
    for x0 in batch {
        let t = fixed.unwrap_or_else(|| rng.below(schedule.len()));
        let b = noised_batch(&[x0], vec![t], schedule, rng);
        let xt = Tensor::new(x0.shape(), b.noisy)?;
        let pred = model.predict(&xt, t)?;
        total += pred
            .data()
            .iter()
            .zip(&b.noise)
            .map(|(&p, &e)| (p - e).as_f64().powi(2))
            .sum::<f64>();
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NumericFailure("loss is non-finite".into()));
    }
    Ok(loss)
}
