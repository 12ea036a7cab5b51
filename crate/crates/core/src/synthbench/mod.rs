//! Synthetic feature-space anomaly benchmark and the FTEN interchange format.
//!
//! Normal samples are `z = M + ρ·smooth(ε)`: a fixed low-frequency mean
//! field `M` (a sinusoid mixture drawn from the config seed) plus white
//! noise passed through a separable box filter that keeps unit variance. Anomalous samples add `δ·u` over an
//! axis-aligned rectangle, `u` a random unit vector across channels, with
//! the rectangle's pixel ratio inside a size bucket.
//!
//! Every sample is drawn from its own stream keyed by `(role, index)`, so a
//! dataset is a pure function of the config.

mod ften;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ften::{
    decode_ften, decode_ften_header, encode_ften, read_ften, write_ften, FTEN_HEADER_LEN, FTEN_MAGIC, FTEN_VERSION,
};

use crate::error::{invalid, Error, Result};
use crate::numerics::{Mask, Real, Rng, Tensor};

/// Half-open range `(lo, hi]` of anomalous pixel ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeBucket {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl SizeBucket {
    pub fn new(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
        }
    }

    pub fn contains(&self, ratio: f64) -> bool {
        ratio > self.lo && ratio <= self.hi
    }

    /// tiny (0, 5%], small (5, 10%], medium (10, 20%], large (20, 40%].
    pub fn standard() -> Vec<SizeBucket> {
        vec![
            Self::new("tiny", 0.0, 0.05),
            Self::new("small", 0.05, 0.10),
            Self::new("medium", 0.10, 0.20),
            Self::new("large", 0.20, 0.40),
        ]
    }

    /// Rectangle sizes `(rows, cols)` whose ratio on an `h×w` grid falls in the bucket.
    pub fn feasible_sizes(&self, h: usize, w: usize) -> Vec<(usize, usize)> {
        let area = (h * w) as f64;
        let mut out = Vec::new();
        for rh in 1..=h {
            for rw in 1..=w {
                if self.contains((rh * rw) as f64 / area) {
                    out.push((rh, rw));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub n_train: usize,
    pub n_test_normal: usize,
    pub n_test_anomalous: usize,
    /// Box-filter radius of the noise field.
    pub smooth_radius: usize,
    /// Per-element noise standard deviation `ρ`.
    pub noise_scale: f64,
    /// Amplitude of the mean field `M`.
    pub mean_amplitude: f64,
    /// Anomaly magnitude `δ`.
    pub magnitude: f64,
    /// Anomalous samples cycle through these buckets in order.
    pub buckets: Vec<SizeBucket>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            channels: 8,
            height: 8,
            width: 8,
            n_train: 1000,
            n_test_normal: 100,
            n_test_anomalous: 100,
            smooth_radius: 1,
            noise_scale: 1.0,
            mean_amplitude: 1.0,
            magnitude: 3.0,
            buckets: SizeBucket::standard(),
            seed: 0,
        }
    }
}

const ROLE_FIELD: u64 = 1;
const ROLE_TRAIN: u64 = 2;
const ROLE_TEST_NORMAL: u64 = 3;
const ROLE_TEST_ANOMALOUS: u64 = 4;
const FIELD_COMPONENTS: usize = 3;

fn stream(role: u64, index: usize) -> u64 {
    (role << 32) | index as u64
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return invalid("bench dims must be positive");
        }
        if self.n_train == 0 {
            return invalid("bench needs training samples");
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("mean_amplitude", self.mean_amplitude),
            ("magnitude", self.magnitude),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(format!("{name} must be finite and non-negative"));
            }
        }
        if self.n_test_anomalous > 0 && self.buckets.is_empty() {
            return invalid("anomalous samples need at least one size bucket");
        }
        for (i, b) in self.buckets.iter().enumerate() {
            if !(b.lo >= 0.0 && b.lo < b.hi && b.hi <= 1.0) {
                return invalid(format!("bucket {} must satisfy 0 <= lo < hi <= 1", b.name));
            }
            for other in &self.buckets[i + 1..] {
                if b.lo < other.hi && other.lo < b.hi {
                    return invalid(format!("buckets {} and {} overlap", b.name, other.name));
                }
            }
            if b.feasible_sizes(self.height, self.width).is_empty() {
                return invalid(format!(
                    "no rectangle on a {}×{} grid has a ratio in bucket {}",
                    self.height, self.width, b.name
                ));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    /// The deterministic mean field `M`.
    pub fn mean_field<T: Real>(&self) -> Tensor<T> {
        let (c, h, w) = (self.channels, self.height, self.width);
        let mut rng = Rng::new(self.seed, stream(ROLE_FIELD, 0));
        let mut data = vec![0.0; c * h * w];
        let amp = self.mean_amplitude / (FIELD_COMPONENTS as f64).sqrt();
        let tau = std::f64::consts::TAU;
        for ch in 0..c {
            for _ in 0..FIELD_COMPONENTS {
                let a = amp * rng.normal();
                let fy = rng.below(3) as f64;
                let fx = rng.below(3) as f64;
                let phase = tau * rng.uniform();
                for y in 0..h {
                    for x in 0..w {
                        let arg = tau * (fy * y as f64 / h as f64 + fx * x as f64 / w as f64) + phase;
                        data[(ch * h + y) * w + x] += a * arg.sin();
                    }
                }
            }
        }
        Tensor::from_parts(vec![c, h, w], data.into_iter().map(T::lit).collect())
    }
}

/// Separable box filter of radius `r` per channel: window sums divided by
/// the square root of the window size, so unit-variance white noise keeps
/// unit variance at every pixel. Windows are truncated at the border.
pub fn smooth_noise(x: &[f64], c: usize, h: usize, w: usize, r: usize) -> Vec<f64> {
    if r == 0 {
        return x.to_vec();
    }
    let mut tmp = vec![0.0; x.len()];
    for ch in 0..c {
        for y in 0..h {
            let row = &x[(ch * h + y) * w..(ch * h + y + 1) * w];
            for xx in 0..w {
                let lo = xx.saturating_sub(r);
                let hi = (xx + r).min(w - 1);
                tmp[(ch * h + y) * w + xx] = row[lo..=hi].iter().sum::<f64>() / ((hi - lo + 1) as f64).sqrt();
            }
        }
    }
    let mut out = vec![0.0; x.len()];
    for ch in 0..c {
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            for xx in 0..w {
                let s: f64 = (lo..=hi).map(|yy| tmp[(ch * h + yy) * w + xx]).sum();
                out[(ch * h + y) * w + xx] = s / ((hi - lo + 1) as f64).sqrt();
            }
        }
    }
    out
}

/// One normal sample `M + ρ·smooth(ε)` drawn from `rng`.
pub fn gen_normal<T: Real>(cfg: &BenchConfig, field: &Tensor<T>, rng: &mut Rng) -> Tensor<T> {
    let (c, h, w) = (cfg.channels, cfg.height, cfg.width);
    let eps: Vec<f64> = (0..c * h * w).map(|_| rng.normal()).collect();
    let smooth = smooth_noise(&eps, c, h, w, cfg.smooth_radius);
    let rho = T::lit(cfg.noise_scale);
    Tensor::from_parts(
        vec![c, h, w],
        field
            .data()
            .iter()
            .zip(smooth)
            .map(|(&m, s)| m + rho * T::lit(s))
            .collect(),
    )
}

/// Adds `magnitude·u` over a random rectangle whose pixel ratio lies in
/// `bucket`. Returns the modified sample and the rectangle mask.
pub fn inject_anomaly<T: Real>(
    z: &Tensor<T>,
    bucket: &SizeBucket,
    magnitude: f64,
    rng: &mut Rng,
) -> Result<(Tensor<T>, Mask)> {
    let (c, h, w) = z.dims3()?;
    let sizes = bucket.feasible_sizes(h, w);
    if sizes.is_empty() {
        return invalid(format!("no rectangle on a {h}×{w} grid fits bucket {}", bucket.name));
    }
    let (rh, rw) = sizes[rng.below(sizes.len())];
    let y0 = rng.below(h - rh + 1);
    let x0 = rng.below(w - rw + 1);
    let mut u: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= norm);

    let mut mask = Mask::empty(h, w);
    let mut data = z.data().to_vec();
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            mask.set(y, x, true);
            for (ch, &uc) in u.iter().enumerate() {
                data[(ch * h + y) * w + x] += T::lit(magnitude * uc);
            }
        }
    }
    Ok((Tensor::new(&[c, h, w], data)?, mask))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample<T> {
    pub features: Tensor<T>,
    /// `true` for anomalous.
    pub label: bool,
    /// Ground-truth mask at any resolution; empty for normal samples.
    pub mask: Mask,
    /// Size bucket of an injected anomaly.
    pub bucket: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub train: Vec<Tensor<T>>,
    pub test: Vec<LabeledSample<T>>,
}

/// Training normals and a test set of `n_test_normal` normals followed by
/// `n_test_anomalous` anomalies cycling through the buckets.
pub fn make_dataset<T: Real>(cfg: &BenchConfig) -> Result<Dataset<T>> {
    cfg.validate()?;
    let field = cfg.mean_field::<T>();
    let train = (0..cfg.n_train)
        .map(|i| gen_normal(cfg, &field, &mut Rng::new(cfg.seed, stream(ROLE_TRAIN, i))))
        .collect();
    let mut test = Vec::with_capacity(cfg.n_test_normal + cfg.n_test_anomalous);
    for i in 0..cfg.n_test_normal {
        let mut rng = Rng::new(cfg.seed, stream(ROLE_TEST_NORMAL, i));
        test.push(LabeledSample {
            features: gen_normal(cfg, &field, &mut rng),
            label: false,
            mask: Mask::empty(cfg.height, cfg.width),
            bucket: None,
        });
    }
    for i in 0..cfg.n_test_anomalous {
        let mut rng = Rng::new(cfg.seed, stream(ROLE_TEST_ANOMALOUS, i));
        let base = gen_normal(cfg, &field, &mut rng);
        let bucket = &cfg.buckets[i % cfg.buckets.len()];
        let (features, mask) = inject_anomaly(&base, bucket, cfg.magnitude, &mut rng)?;
        test.push(LabeledSample {
            features,
            label: true,
            mask,
            bucket: Some(bucket.name.clone()),
        });
    }
    Ok(Dataset { train, test })
}

pub const TRAIN_FILE: &str = "train.ften";
pub const TEST_FILE: &str = "test.ften";
pub const MASKS_FILE: &str = "test_masks.ften";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    sample_index: usize,
    label: u8,
    mask_file: String,
}

fn mask_tensor<T: Real>(m: &Mask) -> Tensor<T> {
    Tensor::from_parts(
        vec![1, m.height(), m.width()],
        m.bits().iter().map(|&b| if b { T::one() } else { T::zero() }).collect(),
    )
}

fn tensor_mask<T: Real>(t: &Tensor<T>) -> Result<Mask> {
    let (c, h, w) = t.dims3()?;
    if c != 1 {
        return invalid(format!("mask tensors must have one channel, got {c}"));
    }
    Mask::new(h, w, t.data().iter().map(|&v| v > T::lit(0.5)).collect())
}

impl<T: Real> Dataset<T> {
    /// Writes `train.ften`, `test.ften`, `test_masks.ften` and `labels.csv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_ften(dir.join(TRAIN_FILE), &self.train)?;
        let feats: Vec<Tensor<T>> = self.test.iter().map(|s| s.features.clone()).collect();
        write_ften(dir.join(TEST_FILE), &feats)?;
        let masks: Vec<Tensor<T>> = self.test.iter().map(|s| mask_tensor(&s.mask)).collect();
        write_ften(dir.join(MASKS_FILE), &masks)?;
        let mut w = csv::Writer::from_path(dir.join(LABELS_FILE)).map_err(csv_err)?;
        for (i, s) in self.test.iter().enumerate() {
            w.serialize(LabelRow {
                sample_index: i,
                label: s.label as u8,
                mask_file: if s.label { MASKS_FILE.to_string() } else { String::new() },
            })
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a dataset directory. `labels.csv` is optional (all test samples
    /// are then unlabeled normals). A row's `mask_file` names an FTEN file
    /// holding either one mask or one mask per test sample, read at
    /// `sample_index`; an empty `mask_file` means no mask.
    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let train = read_ften(dir.join(TRAIN_FILE))?;
        let feats: Vec<Tensor<T>> = read_ften(dir.join(TEST_FILE))?;
        let (h, w) = match feats.first() {
            Some(f) => {
                let (_, h, w) = f.dims3()?;
                (h, w)
            }
            None => (1, 1),
        };
        let mut test: Vec<LabeledSample<T>> = feats
            .into_iter()
            .map(|features| LabeledSample {
                features,
                label: false,
                mask: Mask::empty(h, w),
                bucket: None,
            })
            .collect();
        let labels_path = dir.join(LABELS_FILE);
        if labels_path.exists() {
            let mut cache: std::collections::HashMap<String, Vec<Tensor<T>>> = Default::default();
            let mut r = csv::Reader::from_path(&labels_path).map_err(csv_err)?;
            for (line, row) in r.deserialize::<LabelRow>().enumerate() {
                let row = row.map_err(|e| Error::Format {
                    offset: line + 2,
                    message: format!("labels.csv line {}: {e}", line + 2),
                })?;
                let Some(sample) = test.get_mut(row.sample_index) else {
                    return invalid(format!("labels.csv refers to missing sample {}", row.sample_index));
                };
                sample.label = row.label != 0;
                if row.mask_file.is_empty() {
                    continue;
                }
                if !cache.contains_key(&row.mask_file) {
                    cache.insert(row.mask_file.clone(), read_ften(dir.join(&row.mask_file))?);
                }
                let masks = &cache[&row.mask_file];
                let m = match masks.len() {
                    1 => &masks[0],
                    _ => masks.get(row.sample_index).ok_or_else(|| {
                        Error::InvalidArgument(format!("{} has no mask for sample {}", row.mask_file, row.sample_index))
                    })?,
                };
                sample.mask = tensor_mask(m)?;
            }
        }
        Ok(Self { train, test })
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format {
            offset: 0,
            message: format!("{other:?}"),
        },
    }
}
