use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    shapes: Vec<Vec<usize>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor], config: AdamConfig) -> Result<Self> {
        if !(config.lr >= 0.0 && config.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {config:?}")));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::Config(format!("Adam betas must lie in [0, 1): {config:?}")));
        }
        Ok(AdamState {
            config,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            shapes: params.iter().map(|p| p.shape().to_vec()).collect(),
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of `params` with `grads`.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.shapes.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                &[self.shapes.len()],
                &[params.len(), grads.len()],
            ));
        }
        for ((p, g), shape) in params.iter().zip(grads).zip(&self.shapes) {
            if p.shape() != shape.as_slice() || g.len() != p.len() {
                return Err(Error::shape("adam_step", shape, p.shape()));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric("non-finite gradient passed to adam_step".into()));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, theta) in p.values_mut().iter_mut().enumerate() {
                let gk = grads[i][k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Steps using each parameter's accumulated gradient slot (missing slots
    /// count as zero), then clears the slots.
    pub fn step_from_slots(&mut self, params: &mut [Tensor]) -> Result<()> {
        let grads: Vec<Vec<f64>> = params
            .iter()
            .map(|p| p.grad().map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
            .collect();
        self.step(params, &grads)?;
        params.iter_mut().for_each(Tensor::zero_grad);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::vector(vec![1.5, -2.0]).unwrap()];
        let mut st = AdamState::new(&p, AdamConfig::default()).unwrap();
        st.step(&mut p, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(p[0].values(), &[1.5, -2.0]);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn single_step_hand_value() {
        // m = 0.1, v = 0.001; bias correction gives m̂ = v̂ = 1, so
        // θ' = -0.1 / (1 + 1e-8).
        let mut p = vec![Tensor::vector(vec![0.0]).unwrap()];
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&p, cfg).unwrap();
        st.step(&mut p, &[vec![1.0]]).unwrap();
        assert!((p[0].values()[0] + 0.1).abs() < 1e-7);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = vec![Tensor::matrix(2, 2, vec![0.3, -0.1, 0.7, 2.0]).unwrap()];
            let mut st = AdamState::new(&p, AdamConfig::default()).unwrap();
            for s in 0..25 {
                let g: Vec<f64> = (0..4).map(|k| ((s * 4 + k) as f64 * 0.37).sin()).collect();
                st.step(&mut p, &[g]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = vec![Tensor::vector(vec![0.0, 0.0]).unwrap()];
        let mut st = AdamState::new(&p, AdamConfig::default()).unwrap();
        assert!(matches!(st.step(&mut p, &[vec![1.0]]), Err(Error::Shape { .. })));
        let mut other = vec![Tensor::vector(vec![0.0; 3]).unwrap()];
        assert!(st.step(&mut other, &[vec![0.0; 3]]).is_err());
    }
}
