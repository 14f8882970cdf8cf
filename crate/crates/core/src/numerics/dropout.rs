use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Inverted-dropout mask: each entry is `0` with probability `1 - keep_prob`
/// and `1 / keep_prob` otherwise, so evaluation needs no rescaling.
pub fn dropout_mask(shape: Vec<usize>, keep_prob: f64, rng: &mut impl Rng) -> Result<Tensor> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::Config(format!(
            "keep probability must lie in (0, 1], got {keep_prob}"
        )));
    }
    let n = shape.iter().product();
    let scale = 1.0 / keep_prob;
    let values = (0..n)
        .map(|_| {
            if keep_prob == 1.0 || rng.random::<f64>() < keep_prob {
                scale
            } else {
                0.0
            }
        })
        .collect();
    Ok(Tensor::new(shape, values))
}
