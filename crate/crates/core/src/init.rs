use jex_tensor::Tensor;
use rand::Rng;

use crate::error::Result;

/// Uniform with standard deviation `1/√fan_in`, i.e. in `±√(3/fan_in)`.
pub(crate) fn uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Result<Tensor> {
    let bound = (3.0 / fan_in.max(1) as f64).sqrt();
    Ok(Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))?)
}
