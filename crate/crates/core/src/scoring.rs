//! Anomaly maps and image-level scores.
//!
//! Inversion-based modes read the terminal latent `z_T` (shape `C×h×w`):
//!
//! | mode       | low-res map `A_low`          | image score             |
//! |------------|------------------------------|-------------------------|
//! | `nll`      | `½‖z[:,i,j]‖² + (C/2)ln 2π`  | `Σ A_low`               |
//! | `diff`     | `‖z[:,i,j]‖₂`                | `max − min`             |
//! | `combined` | `‖z[:,i,j]‖₂`                | `max − min + Σ A_low`   |
//!
//! The baselines score clean features directly: `recon` uses the per-pixel
//! channel-mean squared error against a reconstruction, `mahalanobis` the
//! diagonal Mahalanobis distance to per-location training statistics. Both
//! take the map maximum as image score. Every map is bilinearly upsampled
//! (corner-aligned) to the output resolution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{bilinear_upsample, Real, Tensor};

/// Variance floor for [`fit_location_stats`].
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Nll,
    Diff,
    #[default]
    Combined,
    Recon,
    Mahalanobis,
}

impl ScoreMode {
    pub const INVERSION: [ScoreMode; 3] = [ScoreMode::Nll, ScoreMode::Diff, ScoreMode::Combined];

    pub fn name(self) -> &'static str {
        match self {
            ScoreMode::Nll => "nll",
            ScoreMode::Diff => "diff",
            ScoreMode::Combined => "combined",
            ScoreMode::Recon => "recon",
            ScoreMode::Mahalanobis => "mahalanobis",
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nll" => Ok(ScoreMode::Nll),
            "diff" => Ok(ScoreMode::Diff),
            "combined" => Ok(ScoreMode::Combined),
            "recon" => Ok(ScoreMode::Recon),
            "mahalanobis" => Ok(ScoreMode::Mahalanobis),
            _ => invalid(format!("unknown scoring mode {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyResult<T> {
    pub score: T,
    /// Upsampled `H×W` map.
    pub map: Tensor<T>,
    /// `h×w` map before upsampling.
    pub map_low: Tensor<T>,
    pub mode: ScoreMode,
}

fn pixel_reduce<T: Real>(z: &Tensor<T>, f: impl Fn(&mut dyn Iterator<Item = T>) -> T) -> Result<Tensor<T>> {
    let (c, h, w) = z.dims3()?;
    let plane = h * w;
    let d = z.data();
    Ok(Tensor::from_fn(&[h, w], |p| f(&mut (0..c).map(|k| d[k * plane + p]))))
}

/// Euclidean norm over channels at every pixel.
pub fn norm_map<T: Real>(z: &Tensor<T>) -> Result<Tensor<T>> {
    pixel_reduce(z, |it| it.map(|v| v * v).sum::<T>().sqrt())
}

/// Per-pixel negative log-density under `N(0, I_C)`.
pub fn nll_map<T: Real>(z: &Tensor<T>) -> Result<Tensor<T>> {
    let c = z.dims3()?.0;
    let k = T::lit(0.5 * c as f64 * (2.0 * std::f64::consts::PI).ln());
    pixel_reduce(z, |it| T::lit(0.5) * it.map(|v| v * v).sum::<T>() + k)
}

/// Image score from a low-resolution map. `nll` recomputes the NLL map from
/// `z`; `diff` and `combined` read `a_low`, which should be the norm map.
pub fn image_score<T: Real>(a_low: &Tensor<T>, z: &Tensor<T>, mode: ScoreMode) -> Result<T> {
    match mode {
        ScoreMode::Nll => Ok(nll_map(z)?.sum()),
        ScoreMode::Diff => Ok(a_low.max() - a_low.min()),
        ScoreMode::Combined => Ok(a_low.max() - a_low.min() + a_low.sum()),
        other => invalid(format!("{other} is not an inversion scoring mode")),
    }
}

fn finish<T: Real>(
    score: T,
    map_low: Tensor<T>,
    out_h: usize,
    out_w: usize,
    mode: ScoreMode,
) -> Result<AnomalyResult<T>> {
    if !score.is_finite() {
        return Err(Error::NumericFailure(format!("{mode} score is non-finite")));
    }
    let map = bilinear_upsample(&map_low, out_h, out_w)?;
    Ok(AnomalyResult {
        score,
        map,
        map_low,
        mode,
    })
}

/// Map and score of a terminal latent.
pub fn anomaly_result<T: Real>(
    z_t: &Tensor<T>,
    out_h: usize,
    out_w: usize,
    mode: ScoreMode,
) -> Result<AnomalyResult<T>> {
    let map_low = match mode {
        ScoreMode::Nll => nll_map(z_t)?,
        ScoreMode::Diff | ScoreMode::Combined => norm_map(z_t)?,
        other => return invalid(format!("{other} is not an inversion scoring mode")),
    };
    let score = match mode {
        ScoreMode::Nll => map_low.sum(),
        _ => image_score(&map_low, z_t, mode)?,
    };
    finish(score, map_low, out_h, out_w, mode)
}

/// Reconstruction-error map: channel-mean squared difference per pixel.
pub fn recon_score<T: Real>(
    z0: &Tensor<T>,
    z0_hat: &Tensor<T>,
    out_h: usize,
    out_w: usize,
) -> Result<AnomalyResult<T>> {
    z0.ensure_same_shape(z0_hat)?;
    let c = T::from_usize_lossy(z0.dims3()?.0);
    let sq = z0.sub(z0_hat)?.map(|v| v * v);
    let map_low = pixel_reduce(&sq, |it| it.sum::<T>() / c)?;
    finish(map_low.max(), map_low, out_h, out_w, ScoreMode::Recon)
}

/// Per-location, per-channel mean and variance of normal features.
#[derive(Clone, Debug, PartialEq)]
pub struct LocationStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

/// Fits [`LocationStats`] with the unbiased variance estimate. Variances
/// below [`VARIANCE_FLOOR`] are raised to it, with a warning.
pub fn fit_location_stats<T: Real>(normals: &[Tensor<T>]) -> Result<LocationStats<T>> {
    if normals.len() < 2 {
        return invalid("location statistics need at least two samples");
    }
    let first = &normals[0];
    first.dims3()?;
    for x in normals {
        first.ensure_same_shape(x)?;
    }
    let n = T::from_usize_lossy(normals.len());
    let mut mean = vec![T::zero(); first.len()];
    for x in normals {
        for (m, &v) in mean.iter_mut().zip(x.data()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![T::zero(); first.len()];
    for x in normals {
        for ((s, &v), &m) in var.iter_mut().zip(x.data()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let floor = T::lit(VARIANCE_FLOOR);
    let mut floored = 0;
    for s in &mut var {
        *s /= n - T::one();
        if *s < floor {
            *s = floor;
            floored += 1;
        }
    }
    if floored > 0 {
        log::warn!("{floored} feature variances raised to the floor {VARIANCE_FLOOR:e}");
    }
    Ok(LocationStats {
        mean: Tensor::new(first.shape(), mean)?,
        var: Tensor::new(first.shape(), var)?,
    })
}

/// Diagonal Mahalanobis map `Σ_c (z − μ)²/σ²`; image score is its maximum.
pub fn mahalanobis_score<T: Real>(
    stats: &LocationStats<T>,
    z: &Tensor<T>,
    out_h: usize,
    out_w: usize,
) -> Result<AnomalyResult<T>> {
    stats.mean.ensure_same_shape(z)?;
    let d = z.sub(&stats.mean)?;
    let terms = d.zip_map(&stats.var, |dv, s| dv * dv / s)?;
    let map_low = pixel_reduce(&terms, |it| it.sum::<T>())?;
    finish(map_low.max(), map_low, out_h, out_w, ScoreMode::Mahalanobis)
}
