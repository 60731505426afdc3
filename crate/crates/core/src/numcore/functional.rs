//! Value-level activations, softmax and dropout.
//!
//! The recorded (differentiable) versions live on [`super::Tape`] and share
//! the elementwise definitions below.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Elu,
    Sigmoid,
    Tanh,
    LeakyRelu(f64),
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu(slope) => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }

    /// Derivative at input `x` with output `y = apply(x)`.
    ///
    /// At exactly zero relu and leaky_relu both return 0.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    slope
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Relu => write!(f, "relu"),
            Activation::Elu => write!(f, "elu"),
            Activation::Sigmoid => write!(f, "sigmoid"),
            Activation::Tanh => write!(f, "tanh"),
            Activation::LeakyRelu(s) => write!(f, "leaky_relu({s})"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Accepts `relu`, `elu`, `sigmoid`, `tanh`, `leaky_relu` (slope 0.2) and
    /// `leaky_relu(<slope>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "relu" => return Ok(Activation::Relu),
            "elu" => return Ok(Activation::Elu),
            "sigmoid" => return Ok(Activation::Sigmoid),
            "tanh" => return Ok(Activation::Tanh),
            "leaky_relu" => return Ok(Activation::LeakyRelu(0.2)),
            _ => {}
        }
        if let Some(arg) = s.strip_prefix("leaky_relu(").and_then(|rest| rest.strip_suffix(')')) {
            let slope: f64 = arg
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad leaky_relu slope in {s:?}")))?;
            if slope.is_finite() {
                return Ok(Activation::LeakyRelu(slope));
            }
        }
        Err(Error::Config(format!("unknown activation {s:?}")))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(x: &Tensor, kind: Activation) -> Tensor {
    let mut out = x.clone();
    out.zero_grad();
    out.set_requires_grad(false);
    out.values_mut().iter_mut().for_each(|v| *v = kind.apply(*v));
    out
}

/// Normalizes `v` along `axis` (0 = down each column, 1 = along each row).
/// Rank-1 tensors only accept axis 0.
pub fn softmax(v: &Tensor, axis: usize) -> Result<Tensor> {
    let (rows, cols) = (v.rows(), v.cols());
    let (outer, inner, stride_outer, stride_inner) = match (v.shape().len(), axis) {
        (1, 0) => (1, cols, 0, 1),
        (2, 1) => (rows, cols, cols, 1),
        (2, 0) => (cols, rows, 1, cols),
        _ => {
            return Err(Error::Domain(format!(
                "softmax axis {axis} out of range for shape {:?}",
                v.shape()
            )))
        }
    };
    let src = v.values();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        let idx = |i: usize| o * stride_outer + i * stride_inner;
        let max = (0..inner).map(|i| src[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in 0..inner {
            let e = (src[idx(i)] - max).exp();
            out[idx(i)] = e;
            total += e;
        }
        for i in 0..inner {
            out[idx(i)] /= total;
        }
    }
    Tensor::new(v.shape().to_vec(), out)
}

pub(crate) fn check_dropout_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Keep-mask for inverted dropout: entries are 0 or `1 / (1 - rate)`.
pub(crate) fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let scale = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
        .collect()
}

/// Inverted dropout. Evaluation mode and `rate == 0` return an exact copy.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, training: bool, rng: &mut R) -> Result<Tensor> {
    check_dropout_rate(rate)?;
    let mut out = x.clone();
    out.zero_grad();
    if !training || rate == 0.0 {
        return Ok(out);
    }
    let mask = dropout_mask(x.len(), rate, rng);
    out.values_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use proptest::prelude::*;

    #[test]
    fn activation_examples() {
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert!((Activation::LeakyRelu(0.2).apply(-1.0) + 0.2).abs() < 1e-15);
        assert_eq!(Activation::Relu.derivative(0.0, 0.0), 0.0);
        assert_eq!(Activation::LeakyRelu(0.2).derivative(0.0, 0.0), 0.0);
        assert_eq!(Activation::LeakyRelu(0.2).derivative(-3.0, -0.6), 0.2);
        assert_eq!(Activation::Elu.apply(-1.0), (-1.0f64).exp() - 1.0);
    }

    #[test]
    fn parses_kinds() {
        assert_eq!("elu".parse::<Activation>().unwrap(), Activation::Elu);
        assert_eq!(
            "leaky_relu(0.1)".parse::<Activation>().unwrap(),
            Activation::LeakyRelu(0.1)
        );
        assert!(matches!("swish".parse::<Activation>(), Err(Error::Config(_))));
    }

    #[test]
    fn softmax_examples() {
        let c = Tensor::vector(vec![4.2, 4.2, 4.2]).unwrap();
        let s = softmax(&c, 0).unwrap();
        assert!(s.values().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

        let one = Tensor::vector(vec![-7.0]).unwrap();
        assert_eq!(softmax(&one, 0).unwrap().values(), &[1.0]);

        let v = Tensor::vector(vec![2f64.ln(), 0.0]).unwrap();
        let s = softmax(&v, 0).unwrap();
        assert!((s.values()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.values()[1] - 1.0 / 3.0).abs() < 1e-15);

        assert!(softmax(&v, 1).is_err());
    }

    #[test]
    fn softmax_matrix_axes() {
        let m = Tensor::matrix(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let rows = softmax(&m, 1).unwrap();
        assert_eq!(rows.values(), &[0.5, 0.5, 0.5, 0.5]);
        let cols = softmax(&m, 0).unwrap();
        let e = 1f64.exp();
        assert!((cols.get(1, 0) - e / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn dropout_eval_and_zero_rate_are_identity() {
        let mut rng = rng_from(3);
        let x = Tensor::matrix(2, 3, vec![0.1, -2.0, 3.3, 4.0, 5.5, -0.25]).unwrap();
        assert_eq!(dropout(&x, 0.5, false, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        assert!(matches!(dropout(&x, 1.0, true, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = rng_from(11);
        let ones = Tensor::full(&[100_000], 1.0).unwrap();
        let d = dropout(&ones, 0.5, true, &mut rng).unwrap();
        let mean = d.sum() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_permutation_equivariant(
            v in prop::collection::vec(-30.0f64..30.0, 1..12),
            shift in 0usize..12,
        ) {
            let t = Tensor::vector(v.clone()).unwrap();
            let s = softmax(&t, 0).unwrap();
            prop_assert!((s.sum() - 1.0).abs() < 1e-12);
            prop_assert!(s.values().iter().all(|&p| p > 0.0));
            let n = v.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let pv: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
            let ps = softmax(&Tensor::vector(pv).unwrap(), 0).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((ps.values()[k] - s.values()[i]).abs() < 1e-14);
            }
        }
    }
}
