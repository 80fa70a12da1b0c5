//! Discrete-time neuron dynamics.
//!
//! The adaptive model keeps two first-order filters per neuron: the synapse
//! filter `k` on the inputs and the reset filter `h` on the neuron's own
//! output. A spike is emitted when `g = W k` reaches `v_th + theta * h`.
//! The hard-reset model integrates `v` directly and clears it after a spike.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{decay, Scalar};

/// Resting potential. Both models measure potentials relative to it.
pub const V_REST: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronConfig {
    /// Synapse filter time constant, in steps.
    pub tau: f64,
    /// Reset filter time constant, in steps.
    pub tau_r: f64,
    /// Reset strength.
    pub theta: f64,
    /// Firing threshold.
    pub v_th: f64,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            tau: 4.0,
            tau_r: 4.0,
            theta: 1.0,
            v_th: 1.0,
        }
    }
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau.is_finite()
            && self.tau > 0.0
            && self.tau_r.is_finite()
            && self.tau_r > 0.0
            && self.theta.is_finite()
            && self.theta >= 0.0
            && self.v_th.is_finite()
            && self.v_th > V_REST;
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!(
                "neuron config requires tau > 0, tau_r > 0, theta >= 0, v_th > 0: {self:?}"
            )))
        }
    }

    pub(crate) fn coefficients<S: Scalar>(&self) -> Coefficients<S> {
        Coefficients {
            alpha: decay(self.tau),
            beta: decay(self.tau_r),
            theta: S::lit(self.theta),
            v_th: S::lit(self.v_th),
        }
    }
}

/// Config values converted to the working scalar.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Coefficients<S> {
    pub alpha: S,
    pub beta: S,
    pub theta: S,
    pub v_th: S,
}

/// How the output nonlinearity maps the membrane margin `v - v_th` to an output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpikeFn {
    /// Heaviside step with `U(0) = 1`.
    Step,
    /// Smooth relaxation `erfc(-x / (sqrt(2) sigma)) / 2`, used for gradient checks.
    Relaxed { sigma: f64 },
}

impl SpikeFn {
    #[inline]
    pub fn apply<S: Scalar>(self, margin: S) -> S {
        match self {
            SpikeFn::Step => {
                if margin >= S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            SpikeFn::Relaxed { sigma } => {
                let z = -margin / S::lit(std::f64::consts::SQRT_2 * sigma);
                S::lit(0.5) * z.erfc()
            }
        }
    }
}

/// Which inequality decides firing in the adaptive model.
///
/// Both are the same condition written two ways; they are kept separate so the
/// equivalence can be checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdForm {
    /// `v = g - theta * h >= v_th`.
    #[default]
    Membrane,
    /// `g >= v_th + theta * h`.
    Adaptive,
}

/// Filter state of one adaptive layer between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<S> {
    /// Synapse filter state, one entry per input channel.
    pub k: Vec<S>,
    /// Reset filter state, one entry per neuron.
    pub h: Vec<S>,
    /// Output of the previous step.
    pub prev_output: Vec<S>,
}

impl<S: Scalar> LayerState<S> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            k: vec![S::zero(); fan_in],
            h: vec![S::zero(); fan_out],
            prev_output: vec![S::zero(); fan_out],
        }
    }
}

/// Intermediate values of one adaptive step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepAux<S> {
    /// Post-synaptic potential `W k`.
    pub g: Vec<S>,
    /// Membrane value `g - theta * h`.
    pub v: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardResetState<S> {
    pub v: Vec<S>,
}

impl<S: Scalar> HardResetState<S> {
    pub fn zeros(fan_out: usize) -> Self {
        Self {
            v: vec![S::zero(); fan_out],
        }
    }
}

fn check_step_inputs<S: Scalar>(input: &[S], w: &Matrix<S>, cfg: &NeuronConfig) -> Result<()> {
    cfg.validate()?;
    Error::check_dim("step input", w.cols(), input.len())?;
    if input.iter().any(|&x| x != S::zero() && x != S::one()) {
        return Err(Error::arg("input spikes must be 0 or 1"));
    }
    if !w.is_finite() {
        return Err(Error::Numeric("non-finite weight".into()));
    }
    Ok(())
}

/// One step of the adaptive-threshold model.
pub fn step_adaptive<S: Scalar>(
    state: &LayerState<S>,
    input: &[S],
    w: &Matrix<S>,
    cfg: &NeuronConfig,
) -> Result<(Vec<S>, LayerState<S>, StepAux<S>)> {
    step_adaptive_with(state, input, w, cfg, ThresholdForm::Membrane)
}

pub fn step_adaptive_with<S: Scalar>(
    state: &LayerState<S>,
    input: &[S],
    w: &Matrix<S>,
    cfg: &NeuronConfig,
    form: ThresholdForm,
) -> Result<(Vec<S>, LayerState<S>, StepAux<S>)> {
    check_step_inputs(input, w, cfg)?;
    Error::check_dim("synapse state", w.cols(), state.k.len())?;
    Error::check_dim("reset state", w.rows(), state.h.len())?;
    Error::check_dim("previous output", w.rows(), state.prev_output.len())?;
    let c = cfg.coefficients::<S>();
    let mut next = state.clone();
    let n = w.rows();
    let mut aux = StepAux {
        g: vec![S::zero(); n],
        v: vec![S::zero(); n],
    };
    let mut out = vec![S::zero(); n];
    advance_adaptive(
        &c,
        input,
        w,
        &mut next.k,
        &mut next.h,
        &state.prev_output,
        &mut aux.g,
        &mut aux.v,
        &mut out,
        SpikeFn::Step,
        form,
    );
    next.prev_output.clone_from(&out);
    Ok((out, next, aux))
}

/// Updates `k`, `h` in place and writes `g`, `v`, and the outputs.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn advance_adaptive<S: Scalar>(
    c: &Coefficients<S>,
    input: &[S],
    w: &Matrix<S>,
    k: &mut [S],
    h: &mut [S],
    prev_output: &[S],
    g: &mut [S],
    v: &mut [S],
    out: &mut [S],
    spike: SpikeFn,
    form: ThresholdForm,
) {
    for (ki, &xi) in k.iter_mut().zip(input) {
        *ki = c.alpha * *ki + xi;
    }
    w.matvec_into(k, g);
    for i in 0..h.len() {
        h[i] = c.beta * h[i] + prev_output[i];
        v[i] = g[i] - c.theta * h[i];
        out[i] = match (spike, form) {
            (SpikeFn::Step, ThresholdForm::Adaptive) => {
                if g[i] >= c.v_th + c.theta * h[i] {
                    S::one()
                } else {
                    S::zero()
                }
            }
            _ => spike.apply(v[i] - c.v_th),
        };
    }
}

/// One step of the hard-reset LIF baseline.
///
/// `v' = e^{-1/tau} v + W x`; neurons with `v' >= v_th` spike and are set to rest.
pub fn step_hard_reset<S: Scalar>(
    state: &HardResetState<S>,
    input: &[S],
    w: &Matrix<S>,
    cfg: &NeuronConfig,
) -> Result<(Vec<S>, HardResetState<S>)> {
    check_step_inputs(input, w, cfg)?;
    Error::check_dim("membrane state", w.rows(), state.v.len())?;
    let c = cfg.coefficients::<S>();
    let mut next = state.clone();
    let mut current = vec![S::zero(); w.rows()];
    let mut out = vec![S::zero(); w.rows()];
    advance_hard_reset(&c, input, w, &mut next.v, &mut current, &mut out);
    Ok((out, next))
}

/// Writes the input current into `current` and the pre-reset membrane into `v`
/// before resetting; callers that record traces read `v` before the reset.
#[inline]
pub(crate) fn advance_hard_reset<S: Scalar>(
    c: &Coefficients<S>,
    input: &[S],
    w: &Matrix<S>,
    v: &mut [S],
    current: &mut [S],
    out: &mut [S],
) {
    w.matvec_into(input, current);
    let rest = S::lit(V_REST);
    for i in 0..v.len() {
        v[i] = c.alpha * v[i] + current[i];
        if v[i] >= c.v_th {
            out[i] = S::one();
            v[i] = rest;
        } else {
            out[i] = S::zero();
        }
    }
}

/// Continuous synapse kernel `e^{-t/tau}`.
pub fn psp_kernel<S: Scalar>(t: S, tau: S) -> Result<S> {
    if t < S::zero() || t.is_nan() {
        return Err(Error::arg("kernel time must be non-negative"));
    }
    if tau <= S::zero() {
        return Err(Error::arg("time constant must be positive"));
    }
    Ok((-t / tau).exp())
}
