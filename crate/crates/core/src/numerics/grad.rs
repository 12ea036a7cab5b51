use crate::error::{invalid, Error, Result};
use crate::numerics::{Real, Tensor};

/// Central-difference gradient `(f(x+h·e_i) − f(x−h·e_i)) / 2h`, one
/// coordinate at a time. Used as the oracle for the reverse-mode kernels.
pub fn finite_diff_grad<T: Real>(mut f: impl FnMut(&Tensor<T>) -> T, x: &Tensor<T>, h: T) -> Result<Tensor<T>> {
    if !(h > T::zero()) {
        return invalid("finite-difference step must be positive");
    }
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NumericFailure(format!(
                "objective non-finite while probing coordinate {i}"
            )));
        }
        grad.push((up - down) / (h + h));
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), grad))
}
