//! Output-layer objectives. Each returns the loss and `dE/dO` over `[steps x outputs]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{decay, Scalar};

/// Time constants of the distance kernel `f[t] = e^{-t/tau_m} - e^{-t/tau_s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    pub tau_m: f64,
    pub tau_s: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            tau_m: 4.0,
            tau_s: 1.0,
        }
    }
}

impl DistanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_s > 0.0 && self.tau_m > self.tau_s && self.tau_m.is_finite() {
            Ok(())
        } else {
            Err(Error::arg(format!(
                "distance kernel needs tau_m > tau_s > 0, got {self:?}"
            )))
        }
    }

    /// Kernel value at lag `t`.
    pub fn kernel<S: Scalar>(&self, t: usize) -> S {
        let t = t as f64;
        S::lit((-t / self.tau_m).exp() - (-t / self.tau_s).exp())
    }
}

/// Softmax over spike rates followed by cross-entropy.
pub fn rate_softmax_ce<S: Scalar>(output: &Matrix<S>, label: usize) -> Result<(S, Matrix<S>)> {
    let (steps, n) = output.shape();
    if label >= n {
        return Err(Error::arg(format!("label {label} out of range for {n} outputs")));
    }
    if steps == 0 {
        return Err(Error::arg("empty output window"));
    }
    let inv_t = S::one() / S::lit(steps as f64);
    let mut logits = vec![S::zero(); n];
    for t in 0..steps {
        for (l, &o) in logits.iter_mut().zip(output.row(t)) {
            *l += o;
        }
    }
    logits.iter_mut().for_each(|l| *l *= inv_t);
    let max = logits.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: S = exps.iter().cloned().sum();
    let p: Vec<S> = exps.iter().map(|&e| e / z).collect();
    let loss = -(p[label].ln());
    let mut grad = Matrix::zeros(steps, n);
    for t in 0..steps {
        for (i, g) in grad.row_mut(t).iter_mut().enumerate() {
            let target = if i == label { S::one() } else { S::zero() };
            *g = (p[i] - target) * inv_t;
        }
    }
    Ok((loss, grad))
}

/// Predicted class: the output with most spikes, lowest index on ties.
pub fn predict_class<S: Scalar>(output: &Matrix<S>) -> usize {
    let mut counts = vec![S::zero(); output.cols()];
    for t in 0..output.rows() {
        for (c, &o) in counts.iter_mut().zip(output.row(t)) {
            *c += o;
        }
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Kernel-filtered trace `(f * S)[t]`, computed with two first-order recursions.
pub fn filtered_trace<S: Scalar>(train: &[S], cfg: &DistanceConfig) -> Vec<S> {
    let a: S = decay(cfg.tau_m);
    let b: S = decay(cfg.tau_s);
    let (mut m, mut s) = (S::zero(), S::zero());
    train
        .iter()
        .map(|&x| {
            // f[0] = 0, so the current spike enters only from the next step on
            let f = a * m - b * s;
            m = a * m + x;
            s = b * s + x;
            f
        })
        .collect()
}

/// Spike-train distance `1/(2T) sum_t (f*S_i - f*S_j)^2` over `t in [0, T)`.
pub fn van_rossum_distance<S: Scalar>(si: &[S], sj: &[S], cfg: &DistanceConfig) -> Result<S> {
    Error::check_dim("spike train length", si.len(), sj.len())?;
    cfg.validate()?;
    if si.is_empty() {
        return Ok(S::zero());
    }
    let ti = filtered_trace(si, cfg);
    let tj = filtered_trace(sj, cfg);
    let sum: S = ti.iter().zip(&tj).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(sum / S::lit(2.0 * si.len() as f64))
}

/// Same distance by direct `O(T^2)` convolution.
pub fn van_rossum_distance_direct<S: Scalar>(
    si: &[S],
    sj: &[S],
    cfg: &DistanceConfig,
) -> Result<S> {
    Error::check_dim("spike train length", si.len(), sj.len())?;
    cfg.validate()?;
    let n = si.len();
    if n == 0 {
        return Ok(S::zero());
    }
    let kernel: Vec<S> = (0..n).map(|t| cfg.kernel(t)).collect();
    let mut sum = S::zero();
    for t in 0..n {
        let mut d = S::zero();
        for u in 0..=t {
            d += kernel[t - u] * (si[u] - sj[u]);
        }
        sum += d * d;
    }
    Ok(sum / S::lit(2.0 * n as f64))
}

/// Sum of per-train distances between outputs and targets.
///
/// The gradient treats every `O[t]` as a free variable; the dependence of later
/// outputs on earlier ones is left to the backward pass through the network.
pub fn association_loss<S: Scalar>(
    outputs: &Matrix<S>,
    targets: &Matrix<S>,
    cfg: &DistanceConfig,
) -> Result<(S, Matrix<S>)> {
    if outputs.shape() != targets.shape() {
        return Err(Error::arg(format!(
            "output shape {:?} differs from target shape {:?}",
            outputs.shape(),
            targets.shape()
        )));
    }
    cfg.validate()?;
    let (steps, n) = outputs.shape();
    let mut grad = Matrix::zeros(steps, n);
    if steps == 0 {
        return Ok((S::zero(), grad));
    }
    let a: S = decay(cfg.tau_m);
    let b: S = decay(cfg.tau_s);
    let inv_t = S::one() / S::lit(steps as f64);
    let mut loss = S::zero();
    let column = |m: &Matrix<S>, i: usize| (0..steps).map(|t| m.get(t, i)).collect::<Vec<_>>();
    for i in 0..n {
        let to = filtered_trace(&column(outputs, i), cfg);
        let tt = filtered_trace(&column(targets, i), cfg);
        let resid: Vec<S> = to.iter().zip(&tt).map(|(&x, &y)| x - y).collect();
        loss += resid.iter().map(|&r| r * r).sum::<S>() * S::lit(0.5) * inv_t;
        // reverse-time correlation of the residual with the kernel
        let (mut m, mut s) = (S::zero(), S::zero());
        for t in (0..steps).rev() {
            grad.set(t, i, (a * m - b * s) * inv_t);
            m = resid[t] + a * m;
            s = resid[t] + b * s;
        }
    }
    Ok((loss, grad))
}

/// Training objective for one sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective<S> {
    Classification { label: usize },
    Association { target: Matrix<S>, distance: DistanceConfig },
}

impl<S: Scalar> Objective<S> {
    pub fn evaluate(&self, output: &Matrix<S>) -> Result<(S, Matrix<S>)> {
        match self {
            Objective::Classification { label } => rate_softmax_ce(output, *label),
            Objective::Association { target, distance } => {
                association_loss(output, target, distance)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> DistanceConfig {
        DistanceConfig::default()
    }

    #[test]
    fn silent_outputs_uniform() {
        let (loss, grad) = rate_softmax_ce(&Matrix::<f64>::zeros(10, 5), 2).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
        assert!((grad.get(0, 0) - 0.2 / 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_class_example() {
        let mut out = Matrix::<f64>::zeros(8, 2);
        for t in 0..8 {
            out.set(t, 0, 1.0);
        }
        let (loss, grad) = rate_softmax_ce(&out, 0).unwrap();
        assert!((loss - 0.313_261_687_518_222_9).abs() < 1e-12);
        for t in 0..8 {
            assert!(grad.row(t).iter().sum::<f64>().abs() < 1e-15);
        }
        assert!(rate_softmax_ce(&out, 2).is_err());
    }

    #[test]
    fn extra_labeled_spike_lowers_loss() {
        let mut out = Matrix::<f64>::zeros(6, 3);
        out.set(1, 1, 1.0);
        out.set(2, 0, 1.0);
        let (before, _) = rate_softmax_ce(&out, 0).unwrap();
        out.set(4, 0, 1.0);
        let (after, _) = rate_softmax_ce(&out, 0).unwrap();
        assert!(after < before);
    }

    #[test]
    fn predict_ties_lowest_index() {
        let mut out = Matrix::<f64>::zeros(3, 3);
        out.set(0, 1, 1.0);
        out.set(1, 2, 1.0);
        assert_eq!(predict_class(&out), 1);
        assert_eq!(predict_class(&Matrix::<f64>::zeros(3, 3)), 0);
    }

    #[test]
    fn distance_worked_example() {
        let si = [0.0f64; 4];
        let sj = [1.0, 0.0, 0.0, 0.0];
        let d = van_rossum_distance(&si, &sj, &cfg()).unwrap();
        assert!((d - 0.071_181_856_581_790_35).abs() < 1e-12);
        assert!((van_rossum_distance_direct(&si, &sj, &cfg()).unwrap() - d).abs() < 1e-15);
    }

    #[test]
    fn distance_checks() {
        assert!(van_rossum_distance(&[0.0; 3], &[0.0; 4], &cfg()).is_err());
        let bad = DistanceConfig {
            tau_m: 1.0,
            tau_s: 4.0,
        };
        assert!(van_rossum_distance(&[0.0; 3], &[0.0; 3], &bad).is_err());
        assert_eq!(cfg().kernel::<f64>(0), 0.0);
    }

    #[test]
    fn association_reduces_to_distance() {
        let o = Matrix::from_vec(5, 1, vec![1.0f64, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let s = Matrix::from_vec(5, 1, vec![0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let (loss, _) = association_loss(&o, &s, &cfg()).unwrap();
        let d = van_rossum_distance(o.as_slice(), s.as_slice(), &cfg()).unwrap();
        assert!((loss - d).abs() < 1e-15);
        let (zero, g) = association_loss(&o, &o, &cfg()).unwrap();
        assert_eq!(zero, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
        assert!(association_loss(&o, &Matrix::zeros(5, 2), &cfg()).is_err());
    }

    #[test]
    fn association_gradient_matches_finite_differences() {
        let steps = 12;
        let o = Matrix::from_fn(steps, 3, |t, i| ((t * 7 + i * 3) % 5) as f64 / 5.0);
        let s = Matrix::from_fn(steps, 3, |t, i| f64::from(u8::from((t + i) % 4 == 0)));
        let (_, g) = association_loss(&o, &s, &cfg()).unwrap();
        let eps = 1e-6;
        for t in 0..steps {
            for i in 0..3 {
                let mut p = o.clone();
                p.set(t, i, o.get(t, i) + eps);
                let mut m = o.clone();
                m.set(t, i, o.get(t, i) - eps);
                let fd = (association_loss(&p, &s, &cfg()).unwrap().0
                    - association_loss(&m, &s, &cfg()).unwrap().0)
                    / (2.0 * eps);
                assert!((fd - g.get(t, i)).abs() < 1e-8, "t={t} i={i}");
            }
        }
    }

    fn train(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop::bool::weighted(0.3).prop_map(|b| f64::from(u8::from(b))), len)
    }

    proptest! {
        #[test]
        fn recursion_matches_direct((a, b) in (1usize..200).prop_flat_map(|n| (train(n), train(n)))) {
            let r = van_rossum_distance(&a, &b, &cfg()).unwrap();
            let d = van_rossum_distance_direct(&a, &b, &cfg()).unwrap();
            prop_assert!((r - d).abs() < 1e-10);
            prop_assert!(r >= 0.0);
            prop_assert_eq!(r, van_rossum_distance(&b, &a, &cfg()).unwrap());
        }

        #[test]
        fn common_spike_leaves_distance_unchanged(
            (a, b, t) in (2usize..100).prop_flat_map(|n| (train(n), train(n), 0..n))
        ) {
            prop_assume!(a[t] == 0.0 && b[t] == 0.0);
            let before = van_rossum_distance(&a, &b, &cfg()).unwrap();
            let (mut a2, mut b2) = (a.clone(), b.clone());
            a2[t] = 1.0;
            b2[t] = 1.0;
            let after = van_rossum_distance(&a2, &b2, &cfg()).unwrap();
            prop_assert!((before - after).abs() < 1e-12);
        }
    }
}
