//! FTEN tensor files.
//!
//! ```text
//! offset  type     field
//! 0       [u8; 4]  magic "FTEN"
//! 4       u32      version (1)
//! 8       u32      N
//! 12      u32      C
//! 16      u32      h
//! 20      u32      w
//! 24      f32 × N·C·h·w, (n, c, y, x) row-major
//! ```
//!
//! Little-endian throughout. Values must be finite.

use std::fs;
use std::path::Path;

use crate::error::{format_err, invalid, Error, Result};
use crate::numerics::{Real, Tensor};

pub const FTEN_MAGIC: [u8; 4] = *b"FTEN";
pub const FTEN_VERSION: u32 = 1;
pub const FTEN_HEADER_LEN: usize = 24;

/// Encodes `C×h×w` tensors of one shape. Values are narrowed to `f32`.
pub fn encode_ften<T: Real>(tensors: &[Tensor<T>]) -> Result<Vec<u8>> {
    let Some(first) = tensors.first() else {
        return invalid("FTEN needs at least one tensor");
    };
    let (c, h, w) = first.dims3()?;
    let mut out = Vec::with_capacity(FTEN_HEADER_LEN + 4 * tensors.len() * first.len());
    out.extend_from_slice(&FTEN_MAGIC);
    for v in [FTEN_VERSION as usize, tensors.len(), c, h, w] {
        let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit in u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in tensors {
        first.ensure_same_shape(t)?;
        for &v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Shape `(N, C, h, w)` from a header, validating magic and version.
pub fn decode_ften_header(bytes: &[u8]) -> Result<(usize, usize, usize, usize)> {
    if bytes.len() < 4 {
        return format_err(bytes.len(), "truncated before magic");
    }
    if bytes[..4] != FTEN_MAGIC {
        return format_err(0, "bad magic, not an FTEN file");
    }
    let word = |i: usize| -> Result<u32> {
        let off = 4 + 4 * i;
        match bytes.get(off..off + 4) {
            Some(b) => Ok(u32::from_le_bytes(b.try_into().unwrap())),
            None => format_err(bytes.len(), "truncated header"),
        }
    };
    let version = word(0)?;
    if version != FTEN_VERSION {
        return format_err(4, format!("unsupported FTEN version {version}"));
    }
    Ok((
        word(1)? as usize,
        word(2)? as usize,
        word(3)? as usize,
        word(4)? as usize,
    ))
}

pub fn decode_ften<T: Real>(bytes: &[u8]) -> Result<Vec<Tensor<T>>> {
    let (n, c, h, w) = decode_ften_header(bytes)?;
    let per = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::Format {
            offset: 12,
            message: "tensor dims overflow".into(),
        })?;
    let need = per
        .checked_mul(n)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(FTEN_HEADER_LEN))
        .ok_or_else(|| Error::Format {
            offset: 8,
            message: "payload size overflows".into(),
        })?;
    if bytes.len() < need {
        return format_err(bytes.len(), format!("truncated payload: need {need} bytes"));
    }
    if bytes.len() > need {
        return format_err(need, "trailing bytes after payload");
    }
    let mut out = Vec::with_capacity(n);
    let mut off = FTEN_HEADER_LEN;
    for _ in 0..n {
        let mut data = Vec::with_capacity(per);
        for _ in 0..per {
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            if !v.is_finite() {
                return format_err(off, "non-finite value");
            }
            data.push(T::lit(v as f64));
            off += 4;
        }
        out.push(Tensor::new(&[c, h, w], data)?);
    }
    Ok(out)
}

pub fn write_ften<T: Real>(path: impl AsRef<Path>, tensors: &[Tensor<T>]) -> Result<()> {
    fs::write(path, encode_ften(tensors)?)?;
    Ok(())
}

pub fn read_ften<T: Real>(path: impl AsRef<Path>) -> Result<Vec<Tensor<T>>> {
    decode_ften(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_scalar() {
        let mut b = b"FTEN".to_vec();
        for v in [1u32, 1, 1, 1, 1] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&1.5f32.to_le_bytes());
        assert_eq!(b.len(), 28);
        let t = decode_ften::<f32>(&b).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].shape(), &[1, 1, 1]);
        assert_eq!(t[0].data(), &[1.5]);
    }

    #[test]
    fn header_errors_carry_offsets() {
        let t = vec![Tensor::<f32>::zeros(&[1, 2, 2])];
        let good = encode_ften(&t).unwrap();
        let mut bad = good.clone();
        bad[1] = b'X';
        assert!(matches!(decode_ften::<f32>(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(matches!(decode_ften::<f32>(&bad), Err(Error::Format { offset: 4, .. })));
        assert!(matches!(
            decode_ften::<f32>(&good[..30]),
            Err(Error::Format { offset: 30, .. })
        ));
        let mut bad = good.clone();
        bad[24..28].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_ften::<f32>(&bad),
            Err(Error::Format { offset: 24, .. })
        ));
    }
}
