//! Model files.
//!
//! ```text
//! offset  type       field
//! 0       [u8; 4]    magic "IVAD"
//! 4       u32        version (1)
//! 8       u32        T
//! 12      f64        β_1
//! 20      f64        β_T
//! 28      u32 × 6    C, h, w, width, depth, time_dim
//! 52      u32        n_params
//! 56      f32 × n    parameters
//! ..      u32        CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! All integers and floats are little-endian. Parameters are stored as `f32`.

use std::fs;
use std::path::Path;

use crate::epsnet::{EpsilonModel, MlpConfig, MlpEpsModel};
use crate::error::{format_err, invalid, Error, Result};
use crate::numerics::Real;
use crate::schedule::NoiseSchedule;

pub const MODEL_MAGIC: [u8; 4] = *b"IVAD";
pub const MODEL_VERSION: u32 = 1;
const HEADER_LEN: usize = 56;

pub fn encode_model<T: Real>(model: &MlpEpsModel<T>, schedule: &NoiseSchedule<T>) -> Result<Vec<u8>> {
    let (c, h, w) = match *model.sample_shape() {
        [c, h, w] => (c, h, w),
        ref s => return invalid(format!("model files hold C×h×w models, got shape {s:?}")),
    };
    if model.timesteps() != schedule.len() {
        return invalid("model and schedule disagree on T");
    }
    let cfg = model.config();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * model.num_params() + 4);
    out.extend_from_slice(&MODEL_MAGIC);
    let u32s = |out: &mut Vec<u8>, vals: &[usize]| -> Result<()> {
        for &v in vals {
            let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit in u32")))?;
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    };
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    u32s(&mut out, &[schedule.len()])?;
    out.extend_from_slice(&schedule.beta_start().to_le_bytes());
    out.extend_from_slice(&schedule.beta_end().to_le_bytes());
    u32s(
        &mut out,
        &[c, h, w, cfg.width, cfg.depth, cfg.time_dim, model.num_params()],
    )?;
    for p in model.params() {
        out.extend_from_slice(&(p.as_f64() as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        match self.buf.get(self.pos..self.pos + N) {
            Some(b) => {
                self.pos += N;
                Ok(b.try_into().unwrap())
            }
            None => format_err(self.pos, format!("truncated while reading {what}")),
        }
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }
}

pub fn decode_model<T: Real>(bytes: &[u8]) -> Result<(MlpEpsModel<T>, NoiseSchedule<T>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take::<4>("magic")? != MODEL_MAGIC {
        return format_err(0, "bad magic, not a model file");
    }
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return format_err(4, format!("unsupported model version {version}"));
    }
    let t = r.u32("T")? as usize;
    let beta_start = r.f64("beta_start")?;
    let beta_end = r.f64("beta_end")?;
    let mut dims = [0usize; 7];
    for (d, name) in dims
        .iter_mut()
        .zip(["C", "h", "w", "width", "depth", "time_dim", "n_params"])
    {
        *d = r.u32(name)? as usize;
    }
    let [c, h, w, width, depth, time_dim, n] = dims;
    let payload_end = HEADER_LEN + 4 * n;
    if bytes.len() < payload_end + 4 {
        return format_err(
            bytes.len(),
            format!("truncated: {n} parameters need {} bytes", payload_end + 4),
        );
    }
    if bytes.len() > payload_end + 4 {
        return format_err(payload_end + 4, "trailing bytes after checksum");
    }
    let stored = u32::from_le_bytes(bytes[payload_end..].try_into().unwrap());
    if crc32fast::hash(&bytes[..payload_end]) != stored {
        return format_err(payload_end, "checksum mismatch");
    }
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        let off = r.pos;
        let v = f32::from_le_bytes(r.take::<4>("parameter")?);
        if !v.is_finite() {
            return format_err(off, "non-finite parameter");
        }
        params.push(T::lit(v as f64));
    }
    let schedule = NoiseSchedule::linear(t, beta_start, beta_end)?;
    let cfg = MlpConfig { depth, width, time_dim };
    let mut model = MlpEpsModel::zeroed(&[c, h, w], t, cfg)?;
    if model.num_params() != n {
        return format_err(
            52,
            format!("architecture needs {} parameters, header says {n}", model.num_params()),
        );
    }
    model.set_params(params)?;
    Ok((model, schedule))
}

pub fn save_model<T: Real>(path: impl AsRef<Path>, model: &MlpEpsModel<T>, schedule: &NoiseSchedule<T>) -> Result<()> {
    fs::write(path, encode_model(model, schedule)?)?;
    Ok(())
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<(MlpEpsModel<T>, NoiseSchedule<T>)> {
    decode_model(&fs::read(path)?)
}
