//! Dense arrays, reproducible randomness, interpolation and the reverse-mode
//! kernels shared by the rest of the crate. Internal math runs in the scalar
//! type `T` (normally `f64`); on-disk formats store `f32`.

mod grad;
mod interp;
mod mask;
pub mod ops;
mod real;
mod rng;
mod tensor;

pub use grad::finite_diff_grad;
pub use interp::{aligned_output_index, bilinear_upsample};
pub use mask::Mask;
pub use real::Real;
pub use rng::Rng;
pub use tensor::Tensor;

/// `⌈v⌉`, except that values within `1e-9` of an integer snap to it. Keeps
/// products like `0.4·10` or `(1/3)·3000` from rounding up by one ulp.
pub fn ceil_snapped(v: f64) -> i64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as i64
    } else {
        v.ceil() as i64
    }
}

/// `⌊v⌋` with the same snapping as [`ceil_snapped`].
pub fn floor_snapped(v: f64) -> i64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as i64
    } else {
        v.floor() as i64
    }
}
