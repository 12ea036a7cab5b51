//! Residual MLP noise predictor with time-conditioned scale-shift modulation.
//!
//! ```text
//! emb   = [cos(u·f_k), sin(u·f_k)]          u = t/(T−1), f_k log-spaced in [1, 1e4]
//! c     = W_t2 · silu(W_t1 · emb)           time conditioning
//! h     = W_in · x
//! block:  shift, scale, gate = W_mod · silu(c)
//!         h ← h + gate ⊙ W_2 · silu(W_1 · (h ⊙ (1+scale) + shift))
//! final:  shift, scale = W_fmod · silu(c)
//!         ε = W_out · (h ⊙ (1+scale) + shift)
//! ```
//!
//! `W_mod`, `W_fmod` and `W_out` start at zero, so every block starts as the
//! identity and the initial prediction is zero. All affine maps carry biases.

use std::ops::Range;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::epsnet::EpsilonModel;
use crate::error::{invalid, Result};
use crate::numerics::ops::{
    gated_residual_backward, gated_residual_forward, join_columns, linear_backward, linear_forward, modulate_backward,
    modulate_forward, mse_backward, mse_forward, silu_backward, silu_forward, split_columns,
};
use crate::numerics::{Real, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Number of residual blocks (at least one).
    pub depth: usize,
    pub width: usize,
    /// Length of the sinusoidal time embedding (even).
    pub time_dim: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            width: 128,
            time_dim: 32,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return invalid("MLP depth must be at least 1");
        }
        if self.width == 0 {
            return invalid("MLP width must be positive");
        }
        if self.time_dim < 2 || !self.time_dim.is_multiple_of(2) {
            return invalid("time embedding dimension must be even and at least 2");
        }
        Ok(())
    }
}

/// Parameter block of one affine map: `out×in` weights then `out` biases.
#[derive(Clone, Copy, Debug)]
struct Affine {
    off: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Affine {
    fn len(&self) -> usize {
        self.fan_out * (self.fan_in + 1)
    }
    fn range(&self) -> Range<usize> {
        self.off..self.off + self.len()
    }
    fn w<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.off..self.off + self.fan_in * self.fan_out]
    }
    fn b<'a, T>(&self, p: &'a [T]) -> &'a [T] {
        &p[self.off + self.fan_in * self.fan_out..self.off + self.len()]
    }
    fn wb_mut<'a, T>(&self, p: &'a mut [T]) -> (&'a mut [T], &'a mut [T]) {
        p[self.range()].split_at_mut(self.fan_in * self.fan_out)
    }
    fn forward<T: Real>(&self, p: &[T], x: &[T]) -> Vec<T> {
        linear_forward(x, self.w(p), self.b(p), self.fan_in, self.fan_out)
    }
    fn backward<T: Real>(&self, p: &[T], x: &[T], dy: &[T], grads: &mut [T], want_dx: bool) -> Option<Vec<T>> {
        let (dw, db) = self.wb_mut(grads);
        linear_backward(x, self.w(p), dy, self.fan_in, self.fan_out, dw, db, want_dx)
    }
}

#[derive(Clone, Debug)]
struct BlockLayout {
    modulation: Affine,
    fc1: Affine,
    fc2: Affine,
}

#[derive(Clone, Debug)]
struct Layout {
    input: Affine,
    time1: Affine,
    time2: Affine,
    blocks: Vec<BlockLayout>,
    final_modulation: Affine,
    output: Affine,
    total: usize,
}

impl Layout {
    fn new(input_dim: usize, cfg: &MlpConfig) -> Self {
        let mut off = 0;
        let mut next = |fan_in, fan_out| {
            let a = Affine { off, fan_in, fan_out };
            off += a.len();
            a
        };
        let w = cfg.width;
        let input = next(input_dim, w);
        let time1 = next(cfg.time_dim, w);
        let time2 = next(w, w);
        let blocks = (0..cfg.depth)
            .map(|_| BlockLayout {
                modulation: next(w, 3 * w),
                fc1: next(w, w),
                fc2: next(w, w),
            })
            .collect();
        let final_modulation = next(w, 2 * w);
        let output = next(w, input_dim);
        Self {
            input,
            time1,
            time2,
            blocks,
            final_modulation,
            output,
            total: off,
        }
    }

    fn named(&self) -> Vec<(String, Affine)> {
        let mut v = vec![
            ("input".to_string(), self.input),
            ("time1".to_string(), self.time1),
            ("time2".to_string(), self.time2),
        ];
        for (k, b) in self.blocks.iter().enumerate() {
            v.push((format!("block{k}.modulation"), b.modulation));
            v.push((format!("block{k}.fc1"), b.fc1));
            v.push((format!("block{k}.fc2"), b.fc2));
        }
        v.push(("final.modulation".to_string(), self.final_modulation));
        v.push(("output".to_string(), self.output));
        v
    }
}

/// Sinusoidal embedding of a 0-indexed timestep normalised to `[0, 1]`.
pub(crate) fn time_embedding<T: Real>(t: usize, timesteps: usize, dim: usize) -> Vec<T> {
    let u = if timesteps > 1 {
        t as f64 / (timesteps - 1) as f64
    } else {
        0.0
    };
    let half = dim / 2;
    let freq = |k: usize| {
        if half == 1 {
            1.0
        } else {
            10f64.powf(4.0 * k as f64 / (half - 1) as f64)
        }
    };
    let mut e: Vec<T> = (0..half).map(|k| T::lit((u * freq(k)).cos())).collect();
    e.extend((0..half).map(|k| T::lit((u * freq(k)).sin())));
    e
}

/// Modulation vectors for one timestep.
#[derive(Clone, Debug)]
struct Conditioning<T> {
    blocks: Vec<[Vec<T>; 3]>,
    final_shift: Vec<T>,
    final_scale: Vec<T>,
}

/// A batch of noised inputs with their timesteps and target noises, rows flattened.
#[derive(Clone, Debug)]
pub struct TrainingBatch<T> {
    pub noisy: Vec<T>,
    pub steps: Vec<usize>,
    pub noise: Vec<T>,
}

impl<T: Real> TrainingBatch<T> {
    pub fn rows(&self) -> usize {
        self.steps.len()
    }
}

struct BlockCache<T> {
    h: Vec<T>,
    scale: Vec<T>,
    gate: Vec<T>,
    u: Vec<T>,
    v1: Vec<T>,
    a: Vec<T>,
    v2: Vec<T>,
}

struct ForwardCache<T> {
    x: Vec<T>,
    emb: Vec<T>,
    c1: Vec<T>,
    a1: Vec<T>,
    c: Vec<T>,
    sc: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    h_final: Vec<T>,
    final_scale: Vec<T>,
    u_final: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct MlpEpsModel<T> {
    shape: Vec<usize>,
    timesteps: usize,
    config: MlpConfig,
    layout: Layout,
    params: Vec<T>,
    cond_cache: Vec<OnceLock<Conditioning<T>>>,
}

impl<T: Real> MlpEpsModel<T> {
    /// Fresh model: fan-in scaled Gaussian weights, zero biases, zero
    /// modulation and output layers.
    pub fn new(shape: &[usize], timesteps: usize, config: MlpConfig, rng: &mut Rng) -> Result<Self> {
        let mut m = Self::zeroed(shape, timesteps, config)?;
        let l = m.layout.clone();
        let mut init = |a: Affine| {
            let std = 1.0 / (a.fan_in as f64).sqrt();
            let (w, _) = a.wb_mut(&mut m.params);
            for v in w.iter_mut() {
                *v = T::lit(std * rng.normal());
            }
        };
        init(l.input);
        init(l.time1);
        init(l.time2);
        for b in &l.blocks {
            init(b.fc1);
            init(b.fc2);
        }
        Ok(m)
    }

    /// All parameters zero.
    pub fn zeroed(shape: &[usize], timesteps: usize, config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let input_dim: usize = shape.iter().product();
        if input_dim == 0 {
            return invalid("latent shape must be non-empty");
        }
        if timesteps == 0 {
            return invalid("model needs at least one timestep");
        }
        let layout = Layout::new(input_dim, &config);
        Ok(Self {
            shape: shape.to_vec(),
            timesteps,
            config,
            params: vec![T::zero(); layout.total],
            layout,
            cond_cache: (0..timesteps).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn from_params(shape: &[usize], timesteps: usize, config: MlpConfig, params: Vec<T>) -> Result<Self> {
        let mut m = Self::zeroed(shape, timesteps, config)?;
        m.set_params(params)?;
        Ok(m)
    }

    pub fn config(&self) -> MlpConfig {
        self.config
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input.fan_in
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.layout.total {
            return invalid(format!(
                "expected {} parameters, got {}",
                self.layout.total,
                params.len()
            ));
        }
        self.params = params;
        self.clear_cache();
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut [T] {
        self.clear_cache();
        &mut self.params
    }

    fn clear_cache(&mut self) {
        for c in &mut self.cond_cache {
            c.take();
        }
    }

    /// Parameter ranges of each affine map, by name (`input`, `block0.fc1`, ...).
    pub fn layer_ranges(&self) -> Vec<(String, Range<usize>)> {
        self.layout.named().into_iter().map(|(n, a)| (n, a.range())).collect()
    }

    /// Overwrites every parameter, including the zero-initialised layers,
    /// with `N(0, scale²/fan_in)` noise so gradient checks exercise every path.
    pub fn randomize(&mut self, rng: &mut Rng, scale: f64) {
        let layers = self.layout.named();
        let params = self.params_mut();
        for (_, a) in layers {
            let std = scale / (a.fan_in as f64).sqrt();
            for v in &mut params[a.range()] {
                *v = T::lit(std * rng.normal());
            }
        }
    }

    fn embed_rows(&self, steps: &[usize]) -> Vec<T> {
        steps
            .iter()
            .flat_map(|&t| time_embedding::<T>(t, self.timesteps, self.config.time_dim))
            .collect()
    }

    fn conditioning(&self, t: usize) -> &Conditioning<T> {
        self.cond_cache[t].get_or_init(|| {
            let p = &self.params;
            let l = &self.layout;
            let w = self.config.width;
            let emb = self.embed_rows(&[t]);
            let c = l.time2.forward(p, &silu_forward(&l.time1.forward(p, &emb)));
            let sc = silu_forward(&c);
            let blocks = l
                .blocks
                .iter()
                .map(|b| {
                    let m = b.modulation.forward(p, &sc);
                    [m[..w].to_vec(), m[w..2 * w].to_vec(), m[2 * w..].to_vec()]
                })
                .collect();
            let f = l.final_modulation.forward(p, &sc);
            Conditioning {
                blocks,
                final_shift: f[..w].to_vec(),
                final_scale: f[w..].to_vec(),
            }
        })
    }

    fn forward_one(&self, x: &[T], t: usize) -> Vec<T> {
        let p = &self.params;
        let l = &self.layout;
        let cond = self.conditioning(t);
        let mut h = l.input.forward(p, x);
        for (b, [shift, scale, gate]) in l.blocks.iter().zip(&cond.blocks) {
            let u = modulate_forward(&h, shift, scale);
            let v2 = b.fc2.forward(p, &silu_forward(&b.fc1.forward(p, &u)));
            h = gated_residual_forward(&h, gate, &v2);
        }
        let u = modulate_forward(&h, &cond.final_shift, &cond.final_scale);
        l.output.forward(p, &u)
    }

    fn forward_batch(&self, x: &[T], steps: &[usize]) -> (Vec<T>, ForwardCache<T>) {
        let p = &self.params;
        let l = &self.layout;
        let w = self.config.width;
        let emb = self.embed_rows(steps);
        let c1 = l.time1.forward(p, &emb);
        let a1 = silu_forward(&c1);
        let c = l.time2.forward(p, &a1);
        let sc = silu_forward(&c);
        let mut h = l.input.forward(p, x);
        let mut blocks = Vec::with_capacity(l.blocks.len());
        for b in &l.blocks {
            let m = b.modulation.forward(p, &sc);
            let mut parts = split_columns(&m, 3, w).into_iter();
            let (shift, scale, gate) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
            let u = modulate_forward(&h, &shift, &scale);
            let v1 = b.fc1.forward(p, &u);
            let a = silu_forward(&v1);
            let v2 = b.fc2.forward(p, &a);
            let next = gated_residual_forward(&h, &gate, &v2);
            blocks.push(BlockCache {
                h: std::mem::replace(&mut h, next),
                scale,
                gate,
                u,
                v1,
                a,
                v2,
            });
        }
        let f = l.final_modulation.forward(p, &sc);
        let mut parts = split_columns(&f, 2, w).into_iter();
        let (final_shift, final_scale) = (parts.next().unwrap(), parts.next().unwrap());
        let u_final = modulate_forward(&h, &final_shift, &final_scale);
        let out = l.output.forward(p, &u_final);
        let cache = ForwardCache {
            x: x.to_vec(),
            emb,
            c1,
            a1,
            c,
            sc,
            blocks,
            h_final: h,
            final_scale,
            u_final,
        };
        (out, cache)
    }

    fn backward(&self, cache: &ForwardCache<T>, dout: &[T]) -> Vec<T> {
        let p = &self.params;
        let l = &self.layout;
        let w = self.config.width;
        let mut g = vec![T::zero(); l.total];

        let du = l.output.backward(p, &cache.u_final, dout, &mut g, true).unwrap();
        let (mut dh, dshift, dscale) = modulate_backward(&cache.h_final, &cache.final_scale, &du);
        let df = join_columns(&[&dshift, &dscale], w);
        let mut dsc = l.final_modulation.backward(p, &cache.sc, &df, &mut g, true).unwrap();

        for (b, bc) in l.blocks.iter().zip(&cache.blocks).rev() {
            let (dgate, dv2) = gated_residual_backward(&bc.gate, &bc.v2, &dh);
            let da = b.fc2.backward(p, &bc.a, &dv2, &mut g, true).unwrap();
            let dv1 = silu_backward(&bc.v1, &da);
            let du = b.fc1.backward(p, &bc.u, &dv1, &mut g, true).unwrap();
            let (dh_mod, dshift, dscale) = modulate_backward(&bc.h, &bc.scale, &du);
            for (d, m) in dh.iter_mut().zip(&dh_mod) {
                *d += *m;
            }
            let dm = join_columns(&[&dshift, &dscale, &dgate], w);
            let dsc_b = b.modulation.backward(p, &cache.sc, &dm, &mut g, true).unwrap();
            for (d, v) in dsc.iter_mut().zip(&dsc_b) {
                *d += *v;
            }
        }
        l.input.backward(p, &cache.x, &dh, &mut g, false);

        let dc = silu_backward(&cache.c, &dsc);
        let da1 = l.time2.backward(p, &cache.a1, &dc, &mut g, true).unwrap();
        let dc1 = silu_backward(&cache.c1, &da1);
        l.time1.backward(p, &cache.emb, &dc1, &mut g, false);
        g
    }

    /// Batched prediction for rows with per-row timesteps, without the
    /// per-timestep conditioning cache.
    pub fn predict_rows(&self, x: &[T], steps: &[usize]) -> Vec<T> {
        self.forward_batch(x, steps).0
    }

    /// Mean squared error of the predicted against the target noise, averaged
    /// over rows and elements.
    pub fn loss(&self, batch: &TrainingBatch<T>) -> T {
        let out = self.predict_rows(&batch.noisy, &batch.steps);
        mse_forward(&out, &batch.noise)
    }

    /// [`Self::loss`] and its exact gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &TrainingBatch<T>) -> (T, Vec<T>) {
        let (out, cache) = self.forward_batch(&batch.noisy, &batch.steps);
        let loss = mse_forward(&out, &batch.noise);
        let dout = mse_backward(&out, &batch.noise);
        (loss, self.backward(&cache, &dout))
    }
}

impl<T: Real> EpsilonModel<T> for MlpEpsModel<T> {
    fn sample_shape(&self) -> &[usize] {
        &self.shape
    }

    fn timesteps(&self) -> usize {
        self.timesteps
    }

    fn predict(&self, x: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
        self.check_input(x, t)?;
        Tensor::new(&self.shape, self.forward_one(x.data(), t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MlpConfig {
        MlpConfig {
            depth: 2,
            width: 6,
            time_dim: 4,
        }
    }

    #[test]
    fn fresh_model_predicts_zero_and_blocks_are_identity() {
        let mut rng = Rng::new(1, 0);
        let m = MlpEpsModel::<f64>::new(&[2, 2, 2], 100, tiny(), &mut rng).unwrap();
        let x = rng.normal_tensor(&[2, 2, 2]);
        let e = m.predict(&x, 50).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cached_and_batched_paths_agree() {
        let mut rng = Rng::new(2, 0);
        let mut m = MlpEpsModel::<f64>::new(&[3, 2, 2], 50, tiny(), &mut rng).unwrap();
        m.randomize(&mut rng, 0.5);
        let xs: Vec<Tensor<f64>> = (0..3).map(|_| rng.normal_tensor(&[3, 2, 2])).collect();
        let steps = [0, 17, 49];
        let flat: Vec<f64> = xs.iter().flat_map(|x| x.data().to_vec()).collect();
        let rows = m.predict_rows(&flat, &steps);
        for (i, (x, &t)) in xs.iter().zip(&steps).enumerate() {
            let one = m.predict(x, t).unwrap();
            for (a, b) in one.data().iter().zip(&rows[i * 12..(i + 1) * 12]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn set_params_invalidates_cache() {
        let mut rng = Rng::new(3, 0);
        let mut m = MlpEpsModel::<f64>::new(&[4], 10, tiny(), &mut rng).unwrap();
        m.randomize(&mut rng, 0.3);
        let x = rng.normal_tensor(&[4]);
        let before = m.predict(&x, 3).unwrap();
        let shifted: Vec<f64> = m.params().iter().map(|v| v * 1.1).collect();
        m.set_params(shifted).unwrap();
        assert_ne!(before, m.predict(&x, 3).unwrap());
    }

    #[test]
    fn time_embedding_distinct_and_bounded() {
        let a = time_embedding::<f64>(0, 1000, 16);
        let b = time_embedding::<f64>(1, 1000, 16);
        let c = time_embedding::<f64>(999, 1000, 16);
        assert_ne!(a, b);
        assert_ne!(b, c);
        assert_eq!(&a[..8], &[1.0; 8]);
        assert!(c.iter().all(|v| v.abs() <= 1.0));
        for t in 1..1000 {
            assert_ne!(time_embedding::<f64>(t - 1, 1000, 8), time_embedding::<f64>(t, 1000, 8));
        }
    }

    #[test]
    fn depth_zero_rejected() {
        let cfg = MlpConfig { depth: 0, ..tiny() };
        assert!(MlpEpsModel::<f64>::zeroed(&[4], 10, cfg).is_err());
        let odd = MlpConfig { time_dim: 3, ..tiny() };
        assert!(MlpEpsModel::<f64>::zeroed(&[4], 10, odd).is_err());
    }

    #[test]
    fn parameter_count() {
        let m = MlpEpsModel::<f64>::zeroed(&[5], 10, tiny()).unwrap();
        let (d, w, e) = (5, 6, 4);
        let want = (d + 1) * w
            + (e + 1) * w
            + (w + 1) * w
            + 2 * ((w + 1) * 3 * w + 2 * (w + 1) * w)
            + (w + 1) * 2 * w
            + (w + 1) * d;
        assert_eq!(m.num_params(), want);
        assert_eq!(m.layer_ranges().last().unwrap().1.end, want);
    }
}
