//! Noise-prediction models `ε_θ(x_t, t)` and their training.

mod analytic;
mod gradcheck;
mod io;
mod mlp;
mod train;

use std::sync::atomic::{AtomicUsize, Ordering};

pub use analytic::AnalyticGaussianModel;
pub use gradcheck::{compare_gradients, fixed_batch, grad_check, numeric_gradient, GradCheckReport};
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use mlp::{MlpConfig, MlpEpsModel, TrainingBatch};
pub use train::{epoch_loss, epoch_loss_at, train_eps, train_eps_with, EpochLog, TrainConfig};

use crate::error::{invalid, Result};
use crate::numerics::{Real, Tensor};

/// A noise predictor over latents of one fixed shape. `t` is a 0-indexed timestep.
pub trait EpsilonModel<T: Real>: Send + Sync {
    fn sample_shape(&self) -> &[usize];

    /// Number of trained timesteps.
    fn timesteps(&self) -> usize;

    fn predict(&self, x: &Tensor<T>, t: usize) -> Result<Tensor<T>>;

    fn check_input(&self, x: &Tensor<T>, t: usize) -> Result<()> {
        if x.shape() != self.sample_shape() {
            return invalid(format!(
                "latent shape {:?} does not match model shape {:?}",
                x.shape(),
                self.sample_shape()
            ));
        }
        if t >= self.timesteps() {
            return invalid(format!("timestep {t} outside trained range 0..{}", self.timesteps()));
        }
        Ok(())
    }
}

impl<T: Real, M: EpsilonModel<T> + ?Sized> EpsilonModel<T> for &M {
    fn sample_shape(&self) -> &[usize] {
        (**self).sample_shape()
    }
    fn timesteps(&self) -> usize {
        (**self).timesteps()
    }
    fn predict(&self, x: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
        (**self).predict(x, t)
    }
}

/// Predicts zero noise everywhere.
#[derive(Clone, Debug)]
pub struct ZeroModel {
    shape: Vec<usize>,
    timesteps: usize,
}

impl ZeroModel {
    pub fn new(shape: &[usize], timesteps: usize) -> Self {
        Self {
            shape: shape.to_vec(),
            timesteps,
        }
    }
}

impl<T: Real> EpsilonModel<T> for ZeroModel {
    fn sample_shape(&self) -> &[usize] {
        &self.shape
    }
    fn timesteps(&self) -> usize {
        self.timesteps
    }
    fn predict(&self, x: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
        self.check_input(x, t)?;
        Ok(Tensor::zeros(x.shape()))
    }
}

/// Wraps a model and counts calls to `predict` (function evaluations).
pub struct CountingModel<M> {
    inner: M,
    calls: AtomicUsize,
}

impl<M> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn nfe(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<T: Real, M: EpsilonModel<T>> EpsilonModel<T> for CountingModel<M> {
    fn sample_shape(&self) -> &[usize] {
        self.inner.sample_shape()
    }
    fn timesteps(&self) -> usize {
        self.inner.timesteps()
    }
    fn predict(&self, x: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict(x, t)
    }
}
