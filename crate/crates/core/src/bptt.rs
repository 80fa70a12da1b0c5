//! Reverse-mode differentiation through the unrolled adaptive dynamics.
//!
//! The step nonlinearity is replaced by a Gaussian surrogate derivative at
//! every spike site. Credit flows backwards in time through both filters:
//! the synapse filter `k` (decay `e^{-1/tau}`) and the reset filter `h`
//! (decay `e^{-1/tau_r}`).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{forward_relaxed, Network, Trace, Variant};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Width of the Gaussian surrogate.
    pub sigma: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0 / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma > 0.0 && self.sigma.is_finite() {
            Ok(())
        } else {
            Err(Error::arg("surrogate sigma must be positive"))
        }
    }
}

/// Surrogate spike derivative `exp(-x^2 / (2 sigma^2)) / (sqrt(2 pi) sigma)`.
///
/// `x` is the membrane margin `v - v_th`. This is the derivative of the smooth
/// relaxation used by [`crate::neuron::SpikeFn::Relaxed`].
#[inline]
pub fn surrogate_derivative<S: Scalar>(x: S, sigma: f64) -> S {
    let s = S::lit(sigma);
    let norm = S::lit((2.0 * std::f64::consts::PI).sqrt() * sigma);
    (-(x * x) / (S::lit(2.0) * s * s)).exp() / norm
}

/// How the error signal is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackwardMode {
    /// Exact reverse mode of the unrolled graph.
    #[default]
    Full,
    /// Truncated recursion: the next layer contributes only through its
    /// same-step PSP, and the reset path only one step back. Matches `Full`
    /// when both filters are memoryless.
    Truncated,
}

/// Weight gradients, one matrix per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    pub layers: Vec<Matrix<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_like(net: &Network<S>) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| Matrix::zeros(l.fan_out(), l.fan_in()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<S>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: S) {
        self.layers.iter_mut().for_each(|m| m.scale(s));
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Matrix::is_finite)
    }

    pub fn max_abs(&self) -> S {
        self.layers
            .iter()
            .map(Matrix::max_abs)
            .fold(S::zero(), S::max)
    }
}

pub fn backward<S: Scalar>(
    net: &Network<S>,
    trace: &Trace<S>,
    d_out: &Matrix<S>,
    surrogate: &SurrogateConfig,
) -> Result<Gradients<S>> {
    backward_with(net, trace, d_out, surrogate, BackwardMode::Full)
}

/// Weight gradients given `dE/dO` of the last layer over `[steps x outputs]`.
pub fn backward_with<S: Scalar>(
    net: &Network<S>,
    trace: &Trace<S>,
    d_out: &Matrix<S>,
    surrogate: &SurrogateConfig,
    mode: BackwardMode,
) -> Result<Gradients<S>> {
    surrogate.validate()?;
    if trace.variant != Variant::Adaptive {
        return Err(Error::arg("backward needs a trace of the adaptive model"));
    }
    Error::check_dim("trace layers", net.layers().len(), trace.layers.len())?;
    let steps = trace.steps();
    if d_out.shape() != (steps, net.num_outputs()) {
        return Err(Error::arg(format!(
            "loss gradient shape {:?} does not match trace output {:?}",
            d_out.shape(),
            (steps, net.num_outputs())
        )));
    }
    for (layer, lt) in net.layers().iter().zip(&trace.layers) {
        if lt.k.shape() != (steps, layer.fan_in()) || lt.v.shape() != (steps, layer.fan_out()) {
            return Err(Error::arg("trace was not recorded for this network"));
        }
    }

    let sigma = surrogate.sigma;
    let mut grads = Gradients::zeros_like(net);
    let mut external = d_out.clone();
    for (li, (layer, lt)) in net.layers().iter().zip(&trace.layers).enumerate().rev() {
        let (n_out, n_in) = layer.weights.shape();
        let c = layer.config.coefficients::<S>();
        let need_prev = li > 0;
        let mut prev_external = Matrix::zeros(steps, if need_prev { n_in } else { 0 });
        let mut dh_next = vec![S::zero(); n_out];
        let mut dv_next = vec![S::zero(); n_out];
        let mut dk_next = vec![S::zero(); n_in];
        let mut dv = vec![S::zero(); n_out];
        let mut dk = vec![S::zero(); n_in];
        let grad = &mut grads.layers[li];
        for t in (0..steps).rev() {
            let ext = external.row(t);
            let v = lt.v.row(t);
            for i in 0..n_out {
                let d_o = match mode {
                    BackwardMode::Full => ext[i] + dh_next[i],
                    BackwardMode::Truncated => ext[i] - c.theta * dv_next[i],
                };
                dv[i] = d_o * surrogate_derivative(v[i] - c.v_th, sigma);
                dh_next[i] = c.beta * dh_next[i] - c.theta * dv[i];
            }
            grad.add_outer(&dv, lt.k.row(t));
            if need_prev {
                match mode {
                    BackwardMode::Full => {
                        for (d, &n) in dk.iter_mut().zip(&dk_next) {
                            *d = c.alpha * n;
                        }
                    }
                    BackwardMode::Truncated => dk.iter_mut().for_each(|d| *d = S::zero()),
                }
                layer.weights.matvec_t_acc(&dv, &mut dk);
                prev_external.row_mut(t).copy_from_slice(&dk);
                std::mem::swap(&mut dk, &mut dk_next);
            }
            dv_next.copy_from_slice(&dv);
        }
        external = prev_external;
    }
    Ok(grads)
}

/// Settings of [`grad_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Number of weights compared (all weights if the network has fewer).
    pub samples: usize,
    pub seed: u64,
    /// Relative accuracy the check is meant to resolve.
    pub resolution: f64,
    /// Lower bound of the relative-error denominator. `None` derives it from
    /// the rounding error of the difference quotient, `u * max(|E|, 1) / eps`,
    /// divided by `resolution`: gradients smaller than that cannot be measured
    /// to `resolution` by central differences and are compared in absolute terms.
    pub floor: Option<f64>,
    pub surrogate: SurrogateConfig,
    pub mode: BackwardMode,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            samples: 128,
            seed: 0,
            resolution: 1e-5,
            floor: None,
            surrogate: SurrogateConfig::default(),
            mode: BackwardMode::Full,
        }
    }
}

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Denominator floor that was applied.
    pub floor: f64,
    /// `(layer, row, col, analytic, numeric)` of the worst weight.
    pub worst: Option<(usize, usize, usize, f64, f64)>,
}

/// Compares [`backward`] on the smooth-relaxed forward pass with central finite differences.
///
/// `loss` maps the relaxed output `[steps x outputs]` to a loss and its gradient.
pub fn grad_check<S, F>(
    net: &Network<S>,
    loss: F,
    input: &Matrix<S>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&Matrix<S>) -> Result<(S, Matrix<S>)> + Sync,
{
    if !(cfg.eps > 0.0) {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    let sigma = cfg.surrogate.sigma;
    let trace = forward_relaxed(net, input, sigma)?;
    let (base_loss, d_out) = loss(trace.output())?;
    let floor = cfg.floor.unwrap_or_else(|| {
        S::epsilon().as_f64() * base_loss.as_f64().abs().max(1.0) / (cfg.eps * cfg.resolution)
    });
    let analytic = backward_with(net, &trace, &d_out, &cfg.surrogate, cfg.mode)?;

    let mut index = Vec::with_capacity(net.num_weights());
    for (li, l) in net.layers().iter().enumerate() {
        for r in 0..l.fan_out() {
            for c in 0..l.fan_in() {
                index.push((li, r, c));
            }
        }
    }
    let chosen: Vec<(usize, usize, usize)> = if index.len() <= cfg.samples {
        index
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picks = sample(&mut rng, index.len(), cfg.samples).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| index[i]).collect()
    };

    let eps = S::lit(cfg.eps);
    let eval = |n: &Network<S>| -> Result<S> {
        let t = forward_relaxed(n, input, sigma)?;
        Ok(loss(t.output())?.0)
    };
    let results: Vec<Result<(f64, (usize, usize, usize, f64, f64))>> = chosen
        .par_iter()
        .map(|&(li, r, c)| {
            let mut plus = net.clone();
            let w = plus.layers()[li].weights.get(r, c);
            plus.layers_mut()[li].weights.set(r, c, w + eps);
            let mut minus = net.clone();
            minus.layers_mut()[li].weights.set(r, c, w - eps);
            let numeric = ((eval(&plus)? - eval(&minus)?) / (S::lit(2.0) * eps)).as_f64();
            let a = analytic.layers[li].get(r, c).as_f64();
            let denom = a.abs().max(numeric.abs()).max(floor);
            Ok(((a - numeric).abs() / denom, (li, r, c, a, numeric)))
        })
        .collect();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        floor,
        worst: None,
    };
    for res in results {
        let (err, at) = res?;
        report.checked += 1;
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = Some(at);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SpikeFrames;
    use crate::losses::{association_loss, rate_softmax_ce, DistanceConfig};
    use crate::network::{forward, init_weights, ForwardOptions, Layer};
    use crate::neuron::NeuronConfig;
    use rand::Rng;

    fn random_frames(steps: usize, ch: usize, p: f64, seed: u64) -> SpikeFrames {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..steps * ch).map(|_| u32::from(rng.random_bool(p))).collect();
        SpikeFrames::from_values(steps, ch, v).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn recorded(net: &Network<f64>, x: &SpikeFrames) -> Trace<f64> {
        forward(net, x, ForwardOptions::recording(Variant::Adaptive))
            .unwrap()
            .1
            .unwrap()
    }

    #[test]
    fn surrogate_values() {
        let sigma = SurrogateConfig::default().sigma;
        assert!((surrogate_derivative(0.0f64, sigma) - 1.0).abs() < 1e-15);
        assert!((surrogate_derivative(sigma, sigma) - 0.606_530_659_712_633_4).abs() < 1e-12);
        assert!(surrogate_derivative(1e3f64, sigma) == 0.0);
        assert!(surrogate_derivative(-1e3f64, sigma) == 0.0);
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let net = init_weights::<f64>(&[6, 5, 3], 1, 3.0, NeuronConfig::default()).unwrap();
        let x = random_frames(30, 6, 0.3, 2);
        let tr = recorded(&net, &x);
        let g = backward(&net, &tr, &Matrix::zeros(30, 3), &SurrogateConfig::default()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn single_step_chain_rule() {
        let net = Network::new(vec![Layer {
            weights: Matrix::from_vec(1, 1, vec![0.7]).unwrap(),
            config: NeuronConfig::default(),
        }])
        .unwrap();
        let mut x = SpikeFrames::zeros(1, 1);
        x.set(0, 0, 1);
        let tr = recorded(&net, &x);
        let upstream = Matrix::from_vec(1, 1, vec![0.3]).unwrap();
        let sur = SurrogateConfig::default();
        let g = backward(&net, &tr, &upstream, &sur).unwrap();
        // k[0] = 1, v[0] = 0.7
        let expected = 0.3 * surrogate_derivative(0.7 - 1.0, sur.sigma) * 1.0;
        assert!((g.layers[0].get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let net = init_weights::<f64>(&[4, 3], 1, 1.0, NeuronConfig::default()).unwrap();
        let x = random_frames(10, 4, 0.3, 1);
        let tr = recorded(&net, &x);
        let sur = SurrogateConfig::default();
        assert!(backward(&net, &tr, &Matrix::zeros(9, 3), &sur).is_err());
        let (_, no_trace) = forward(&net, &x, ForwardOptions::default()).unwrap();
        assert!(no_trace.is_none());
        let hr = forward(&net, &x, ForwardOptions::recording(Variant::HardReset))
            .unwrap()
            .1
            .unwrap();
        assert!(backward(&net, &hr, &Matrix::zeros(10, 3), &sur).is_err());
    }

    #[test]
    fn linearity_in_upstream() {
        let net = init_weights::<f64>(&[8, 10, 4], 3, 3.0, NeuronConfig::default()).unwrap();
        let x = random_frames(25, 8, 0.3, 4);
        let tr = recorded(&net, &x);
        let sur = SurrogateConfig::default();
        let g1 = random_matrix(25, 4, 5);
        let g2 = random_matrix(25, 4, 6);
        let (a, b) = (0.7, -1.3);
        let mut combo = g1.clone();
        combo.scale(a);
        let mut g2s = g2.clone();
        g2s.scale(b);
        combo.add_assign(&g2s);
        let lhs = backward(&net, &tr, &combo, &sur).unwrap();
        let mut rhs = backward(&net, &tr, &g1, &sur).unwrap();
        rhs.scale(a);
        let mut r2 = backward(&net, &tr, &g2, &sur).unwrap();
        r2.scale(b);
        rhs.add_assign(&r2);
        for (l, r) in lhs.layers.iter().zip(&rhs.layers) {
            for (&x, &y) in l.as_slice().iter().zip(r.as_slice()) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn silent_input_channel_gets_zero_gradient() {
        let net = init_weights::<f64>(&[6, 5, 3], 8, 3.0, NeuronConfig::default()).unwrap();
        let mut x = random_frames(30, 6, 0.4, 9);
        for t in 0..30 {
            x.set(t, 2, 0);
        }
        let tr = recorded(&net, &x);
        let g = backward(&net, &tr, &random_matrix(30, 3, 1), &SurrogateConfig::default()).unwrap();
        for r in 0..5 {
            assert_eq!(g.layers[0].get(r, 2), 0.0);
        }
    }

    #[test]
    fn truncated_equals_full_when_filters_are_memoryless() {
        let cfg = NeuronConfig {
            tau: 1e-3,
            tau_r: 1e-3,
            ..NeuronConfig::default()
        };
        let net = init_weights::<f64>(&[7, 9, 6, 3], 11, 4.0, cfg).unwrap();
        let x = random_frames(20, 7, 0.4, 12);
        let tr = recorded(&net, &x);
        let up = random_matrix(20, 3, 13);
        let sur = SurrogateConfig::default();
        let full = backward_with(&net, &tr, &up, &sur, BackwardMode::Full).unwrap();
        let trunc = backward_with(&net, &tr, &up, &sur, BackwardMode::Truncated).unwrap();
        assert!(full.max_abs() > 0.0);
        assert_eq!(full, trunc);
    }

    #[test]
    fn truncated_differs_with_filter_memory() {
        let net = init_weights::<f64>(&[7, 9, 3], 11, 4.0, NeuronConfig::default()).unwrap();
        let x = random_frames(20, 7, 0.4, 12);
        let tr = recorded(&net, &x);
        let up = random_matrix(20, 3, 13);
        let sur = SurrogateConfig::default();
        let full = backward_with(&net, &tr, &up, &sur, BackwardMode::Full).unwrap();
        let trunc = backward_with(&net, &tr, &up, &sur, BackwardMode::Truncated).unwrap();
        assert_ne!(full, trunc);
    }

    fn gradcheck_case(arch: &[usize], steps: usize, eps: f64, assoc: bool) -> f64 {
        let net = init_weights::<f64>(arch, 21, 3.0, NeuronConfig::default()).unwrap();
        let x = random_frames(steps, arch[0], 0.3, 22).to_matrix::<f64>();
        let n_out = *arch.last().unwrap();
        let target = random_frames(steps, n_out, 0.2, 23).to_matrix::<f64>();
        let cfg = GradCheckConfig {
            eps,
            samples: 150,
            ..GradCheckConfig::default()
        };
        let report = if assoc {
            grad_check(&net, |o| association_loss(o, &target, &DistanceConfig::default()), &x, &cfg)
        } else {
            grad_check(&net, |o| rate_softmax_ce(o, 1), &x, &cfg)
        }
        .unwrap();
        assert_eq!(report.checked, net.num_weights().min(150));
        report.max_relative_error
    }

    #[test]
    fn gradcheck_small_nets() {
        assert!(gradcheck_case(&[8, 16, 4], 20, 1e-5, false) < 1e-5);
        assert!(gradcheck_case(&[8, 16, 4], 20, 1e-5, true) < 1e-5);
        assert!(gradcheck_case(&[5, 8, 6, 3], 30, 1e-5, true) < 1e-5);
    }

    #[test]
    fn gradcheck_halving_eps() {
        let e1 = gradcheck_case(&[8, 16, 4], 20, 1e-4, false);
        let e2 = gradcheck_case(&[8, 16, 4], 20, 5e-5, false);
        assert!(e2 <= 4.0 * e1, "{e1} -> {e2}");
    }

    #[test]
    fn gradcheck_zero_net() {
        let net = init_weights::<f64>(&[4, 2], 0, 0.0, NeuronConfig::default()).unwrap();
        let x = Matrix::zeros(10, 4);
        let r = grad_check(&net, |o| rate_softmax_ce(o, 0), &x, &GradCheckConfig::default()).unwrap();
        assert_eq!(r.max_relative_error, 0.0);
        assert!(grad_check(
            &net,
            |o| rate_softmax_ce(o, 0),
            &x,
            &GradCheckConfig {
                eps: 0.0,
                ..GradCheckConfig::default()
            }
        )
        .is_err());
    }
}
