//! Reverse-mode kernels for the layers of the noise-prediction network.
//!
//! Every forward kernel works on a batch of row vectors stored row-major
//! (`rows × dim`). Its backward partner takes the upstream gradient of the
//! output and *accumulates* vector-Jacobian products into the gradients of
//! the inputs and parameters, so a network is differentiated by calling the
//! backward kernels in reverse order of the forward pass.

use crate::numerics::Real;

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `y += a·x`
#[inline]
pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `y = x·Wᵀ + b` with `W` stored `out_dim × in_dim`.
pub fn linear_forward<T: Real>(x: &[T], w: &[T], b: &[T], in_dim: usize, out_dim: usize) -> Vec<T> {
    debug_assert_eq!(w.len(), in_dim * out_dim);
    debug_assert_eq!(b.len(), out_dim);
    let rows = x.len() / in_dim;
    let mut y = Vec::with_capacity(rows * out_dim);
    for xr in x.chunks_exact(in_dim) {
        for (wo, &bo) in w.chunks_exact(in_dim).zip(b) {
            y.push(dot(xr, wo) + bo);
        }
    }
    y
}

/// Backward of [`linear_forward`]: accumulates `dW += dyᵀx`, `db += Σ dy`
/// and, when requested, returns `dx = dy·W`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Real>(
    x: &[T],
    w: &[T],
    dy: &[T],
    in_dim: usize,
    out_dim: usize,
    dw: &mut [T],
    db: &mut [T],
    want_dx: bool,
) -> Option<Vec<T>> {
    let rows = x.len() / in_dim;
    let mut dx = if want_dx {
        Some(vec![T::zero(); rows * in_dim])
    } else {
        None
    };
    for r in 0..rows {
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        let dyr = &dy[r * out_dim..(r + 1) * out_dim];
        for (o, &g) in dyr.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            db[o] += g;
            axpy(g, xr, &mut dw[o * in_dim..(o + 1) * in_dim]);
            if let Some(dx) = dx.as_mut() {
                axpy(
                    g,
                    &w[o * in_dim..(o + 1) * in_dim],
                    &mut dx[r * in_dim..(r + 1) * in_dim],
                );
            }
        }
    }
    dx
}

#[inline]
fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// SiLU, `v·σ(v)`.
pub fn silu_forward<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

pub fn silu_backward<T: Real>(x: &[T], dy: &[T]) -> Vec<T> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| {
            let s = sigmoid(v);
            g * s * (T::one() + v * (T::one() - s))
        })
        .collect()
}

/// Scale-shift modulation `h ⊙ (1 + scale) + shift`, all `rows × dim`.
pub fn modulate_forward<T: Real>(h: &[T], shift: &[T], scale: &[T]) -> Vec<T> {
    h.iter()
        .zip(shift.iter().zip(scale))
        .map(|(&v, (&sh, &sc))| v * (T::one() + sc) + sh)
        .collect()
}

/// Returns `(dh, dshift, dscale)`.
pub fn modulate_backward<T: Real>(h: &[T], scale: &[T], dy: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let dh = dy.iter().zip(scale).map(|(&g, &sc)| g * (T::one() + sc)).collect();
    let dshift = dy.to_vec();
    let dscale = dy.iter().zip(h).map(|(&g, &v)| g * v).collect();
    (dh, dshift, dscale)
}

/// Gated residual `h + gate ⊙ m`.
pub fn gated_residual_forward<T: Real>(h: &[T], gate: &[T], m: &[T]) -> Vec<T> {
    h.iter()
        .zip(gate.iter().zip(m))
        .map(|(&v, (&g, &mv))| v + g * mv)
        .collect()
}

/// Returns `(dgate, dm)`; the gradient w.r.t. `h` is `dy` itself.
pub fn gated_residual_backward<T: Real>(gate: &[T], m: &[T], dy: &[T]) -> (Vec<T>, Vec<T>) {
    let dgate = dy.iter().zip(m).map(|(&g, &mv)| g * mv).collect();
    let dm = dy.iter().zip(gate).map(|(&g, &gv)| g * gv).collect();
    (dgate, dm)
}

/// Mean squared error over all entries.
pub fn mse_forward<T: Real>(pred: &[T], target: &[T]) -> T {
    let n = T::from_usize_lossy(pred.len());
    pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum::<T>() / n
}

pub fn mse_backward<T: Real>(pred: &[T], target: &[T]) -> Vec<T> {
    let k = T::lit(2.0) / T::from_usize_lossy(pred.len());
    pred.iter().zip(target).map(|(&p, &t)| k * (p - t)).collect()
}

/// Splits a `rows × (k·dim)` matrix into `k` matrices of `rows × dim`.
pub fn split_columns<T: Real>(x: &[T], k: usize, dim: usize) -> Vec<Vec<T>> {
    let mut parts = vec![Vec::with_capacity(x.len() / k); k];
    for row in x.chunks_exact(k * dim) {
        for (j, part) in parts.iter_mut().enumerate() {
            part.extend_from_slice(&row[j * dim..(j + 1) * dim]);
        }
    }
    parts
}

/// Inverse of [`split_columns`].
pub fn join_columns<T: Real>(parts: &[&[T]], dim: usize) -> Vec<T> {
    let rows = parts[0].len() / dim;
    let mut out = Vec::with_capacity(rows * dim * parts.len());
    for r in 0..rows {
        for p in parts {
            out.extend_from_slice(&p[r * dim..(r + 1) * dim]);
        }
    }
    out
}
