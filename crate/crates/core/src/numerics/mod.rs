//! Dense `f64` tensors, a reverse-mode differentiation tape, the Adam
//! optimizer and dropout masks.
//!
//! Shape mismatches inside the tape are programming errors and panic with a
//! message naming the primitive and both shapes.

mod adam;
mod dropout;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use dropout::dropout_mask;
pub use tape::{Tape, Var};
pub use tensor::{Gradients, ParamId, ParamStore, Tensor};

/// `ln(sum(exp(x)))`, shifted by the maximum so large inputs do not overflow.
/// Returns `-inf` for an empty slice or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| (x - lse).exp()).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
