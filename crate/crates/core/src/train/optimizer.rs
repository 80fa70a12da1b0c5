use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// AdamW hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("invalid AdamW settings {self:?}")))
        }
    }
}

/// First and second moment estimates per weight.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub m: Vec<Matrix<S>>,
    pub v: Vec<Matrix<S>>,
    pub step: u64,
    pub config: AdamWConfig,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>, config: AdamWConfig) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|(r, c)| (Matrix::zeros(r, c), Matrix::zeros(r, c)))
            .unzip();
        Self {
            m,
            v,
            step: 0,
            config,
        }
    }
}

/// One AdamW update with bias correction and decoupled weight decay.
///
/// Nothing is modified if any gradient is non-finite.
pub fn adamw_step<S: Scalar>(
    weights: &mut [&mut Matrix<S>],
    grads: &[Matrix<S>],
    state: &mut OptimizerState<S>,
) -> Result<()> {
    Error::check_dim("optimizer gradients", weights.len(), grads.len())?;
    Error::check_dim("optimizer moments", weights.len(), state.m.len())?;
    for (i, (w, g)) in weights.iter().zip(grads).enumerate() {
        if w.shape() != g.shape() || w.shape() != state.m[i].shape() {
            return Err(Error::Shape {
                layer: i,
                expected: w.shape(),
                found: g.shape(),
            });
        }
        if let Some(pos) = g.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in layer {i} at flat index {pos}; step aborted"
            )));
        }
    }
    let cfg = state.config;
    state.step += 1;
    let t = state.step as i32;
    let lr = S::lit(cfg.lr);
    let (b1, b2) = (S::lit(cfg.beta1), S::lit(cfg.beta2));
    let bc1 = S::one() - S::lit(cfg.beta1.powi(t));
    let bc2 = S::one() - S::lit(cfg.beta2.powi(t));
    let eps = S::lit(cfg.eps);
    let decay = S::one() - lr * S::lit(cfg.weight_decay);
    for (i, w) in weights.iter_mut().enumerate() {
        let m = state.m[i].as_mut_slice();
        let v = state.v[i].as_mut_slice();
        for (((wj, &gj), mj), vj) in w
            .as_mut_slice()
            .iter_mut()
            .zip(grads[i].as_slice())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mj = b1 * *mj + (S::one() - b1) * gj;
            *vj = b2 * *vj + (S::one() - b2) * gj * gj;
            let m_hat = *mj / bc1;
            let v_hat = *vj / bc2;
            *wj = *wj * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(w: f64) -> Matrix<f64> {
        Matrix::from_vec(1, 1, vec![w]).unwrap()
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let mut w = single(0.37);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut st = OptimizerState::new([(1, 1)], cfg);
        adamw_step(&mut [&mut w], &[single(0.0)], &mut st).unwrap();
        assert_eq!(w.get(0, 0), 0.37);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamWConfig {
            lr: 0.01,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        for g in [0.5, -2.0, 1e-3] {
            let mut w = single(1.0);
            let mut st = OptimizerState::new([(1, 1)], cfg);
            adamw_step(&mut [&mut w], &[single(g)], &mut st).unwrap();
            // bias-corrected moments at t=1 are g and g^2
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((w.get(0, 0) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_decay() {
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamWConfig::default()
        };
        let mut w = single(2.0);
        let mut st = OptimizerState::new([(1, 1)], cfg);
        adamw_step(&mut [&mut w], &[single(0.0)], &mut st).unwrap();
        assert!((w.get(0, 0) - 2.0 * (1.0 - 0.1 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut w = single(1.0);
        let mut st = OptimizerState::new([(1, 1)], AdamWConfig::default());
        assert!(adamw_step(&mut [&mut w], &[single(f64::NAN)], &mut st).is_err());
        assert_eq!((w.get(0, 0), st.step), (1.0, 0));
    }

    /// Textbook Adam, written independently of `adamw_step`.
    fn adam_reference(w: &mut [f64], grads: &[Vec<f64>], cfg: &AdamWConfig) {
        let mut m = vec![0.0; w.len()];
        let mut v = vec![0.0; w.len()];
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            for j in 0..w.len() {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                let mh = m[j] / (1.0 - cfg.beta1.powi(t));
                let vh = v[j] / (1.0 - cfg.beta2.powi(t));
                w[j] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
    }

    #[test]
    fn zero_decay_equals_adam() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            lr: 0.05,
            ..AdamWConfig::default()
        };
        let init: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grads: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..12).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let mut reference = init.clone();
        adam_reference(&mut reference, &grads, &cfg);
        let mut w = Matrix::from_vec(3, 4, init).unwrap();
        let mut st = OptimizerState::new([(3, 4)], cfg);
        for g in &grads {
            adamw_step(&mut [&mut w], &[Matrix::from_vec(3, 4, g.clone()).unwrap()], &mut st)
                .unwrap();
        }
        for (a, b) in w.as_slice().iter().zip(&reference) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }
}
