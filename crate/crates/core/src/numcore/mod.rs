//! Dense 2-D tensors, a reverse-mode tape, Adam and gradient checking.

mod adam;
mod adjacency;
mod functional;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use adjacency::Adjacency;
pub use functional::{activate, dropout, sigmoid, softmax, Activation};
pub use gradcheck::grad_check;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use rand::Rng;

/// Uniform Glorot initialisation: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> crate::Result<Tensor> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = shape.iter().product();
    let values = (0..len).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), values)
}
