//! Feedforward multi-layer network and its time-unrolled forward pass.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SpikeFrames;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neuron::{
    advance_adaptive, advance_hard_reset, NeuronConfig, SpikeFn, ThresholdForm,
};
use crate::scalar::Scalar;

/// Neuron dynamics used by a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Filter-based model with adaptive threshold.
    #[default]
    Adaptive,
    /// Membrane integration with reset to rest after a spike.
    HardReset,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Variant::Adaptive),
            "hard_reset" | "hard-reset" | "hr" => Ok(Variant::HardReset),
            other => Err(Error::arg(format!("unknown neuron variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    /// `fan_out x fan_in` weights.
    pub weights: Matrix<S>,
    pub config: NeuronConfig,
}

impl<S: Scalar> Layer<S> {
    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    layers: Vec<Layer<S>>,
}

impl<S: Scalar> Network<S> {
    /// Builds a network, checking that layer shapes chain and weights are finite.
    pub fn new(layers: Vec<Layer<S>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::arg("network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Shape {
                    layer: i + 1,
                    expected: (pair[1].fan_out(), pair[0].fan_out()),
                    found: pair[1].weights.shape(),
                });
            }
        }
        for (i, l) in layers.iter().enumerate() {
            l.config.validate()?;
            if !l.weights.is_finite() {
                return Err(Error::Numeric(format!("non-finite weight in layer {i}")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    /// Layer sizes, input first.
    pub fn architecture(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].fan_in())
            .chain(self.layers.iter().map(Layer::fan_out))
            .collect()
    }

    pub fn num_inputs(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn num_outputs(&self) -> usize {
        self.layers.last().map(Layer::fan_out).unwrap_or(0)
    }

    pub fn num_weights(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len()).sum()
    }

    /// Applies the same neuron configuration to every layer.
    pub fn set_config(&mut self, config: NeuronConfig) {
        for l in &mut self.layers {
            l.config = config;
        }
    }

    /// Rounds every weight to the nearest `f32`, as stored in checkpoints.
    pub fn round_to_f32(&mut self) {
        for l in &mut self.layers {
            for w in l.weights.as_mut_slice() {
                *w = S::lit(w.as_f64() as f32 as f64);
            }
        }
    }

    /// Casts weights to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Network<T> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: l.weights.map(|w| T::lit(w.as_f64())),
                    config: l.config,
                })
                .collect(),
        }
    }
}

/// Uniform `(-gain/sqrt(fan_in), gain/sqrt(fan_in))` initialisation, reproducible from `seed`.
pub fn init_weights<S: Scalar>(
    architecture: &[usize],
    seed: u64,
    gain: f64,
    config: NeuronConfig,
) -> Result<Network<S>> {
    if architecture.len() < 2 {
        return Err(Error::arg("architecture needs an input and at least one layer"));
    }
    if let Some(i) = architecture.iter().position(|&n| n == 0) {
        return Err(Error::arg(format!("layer {i} has zero size")));
    }
    if !gain.is_finite() || gain < 0.0 {
        return Err(Error::arg("gain must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = architecture
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = gain / (fan_in as f64).sqrt();
            let weights = Matrix::from_fn(fan_out, fan_in, |_, _| {
                if bound == 0.0 {
                    S::zero()
                } else {
                    S::lit(rng.random_range(-bound..bound))
                }
            });
            Layer { weights, config }
        })
        .collect();
    Network::new(layers)
}

/// Per-step record of one layer. Every matrix is `steps x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace<S> {
    /// Synapse filter state (fan-in wide). Empty for the hard-reset variant.
    pub k: Matrix<S>,
    /// Reset filter state. Zero for the hard-reset variant.
    pub h: Matrix<S>,
    /// `W k` for the adaptive model, the input current `W x` for hard reset.
    pub g: Matrix<S>,
    /// Membrane value before thresholding (pre-reset for hard reset).
    pub v: Matrix<S>,
    /// Layer output.
    pub o: Matrix<S>,
}

/// Everything a backward pass needs to replay the forward computation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<S> {
    pub variant: Variant,
    pub spike_fn: SpikeFn,
    pub input: Matrix<S>,
    pub layers: Vec<LayerTrace<S>>,
}

impl<S: Scalar> Trace<S> {
    pub fn steps(&self) -> usize {
        self.input.rows()
    }

    pub fn output(&self) -> &Matrix<S> {
        &self.layers.last().expect("trace has layers").o
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub variant: Variant,
    pub record: bool,
    /// Reject non-binary input instead of clamping it.
    pub strict: bool,
    pub form: ThresholdForm,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Adaptive,
            record: false,
            strict: false,
            form: ThresholdForm::Membrane,
        }
    }
}

impl ForwardOptions {
    pub fn recording(variant: Variant) -> Self {
        Self {
            variant,
            record: true,
            ..Self::default()
        }
    }
}

/// Runs the network over a spike raster.
pub fn forward<S: Scalar>(
    net: &Network<S>,
    input: &SpikeFrames,
    opts: ForwardOptions,
) -> Result<(SpikeFrames, Option<Trace<S>>)> {
    Error::check_dim("network input channels", net.num_inputs(), input.channels())?;
    let binary;
    let input = if input.is_binary() {
        input
    } else if opts.strict {
        return Err(Error::arg("non-binary input spikes in strict mode"));
    } else {
        warn!("count-mode input clamped to binary spikes");
        binary = input.clamped();
        &binary
    };
    let x = input.to_matrix::<S>();
    let (out, trace) = run(net, x, opts.variant, SpikeFn::Step, opts.form, opts.record);
    Ok((SpikeFrames::from_matrix(&out), trace))
}

/// Forward pass of the adaptive model with the smooth spike relaxation.
///
/// Outputs are real values in `(0, 1)`; the trace is always recorded.
pub fn forward_relaxed<S: Scalar>(net: &Network<S>, input: &Matrix<S>, sigma: f64) -> Result<Trace<S>> {
    Error::check_dim("network input channels", net.num_inputs(), input.cols())?;
    let (_, trace) = run(
        net,
        input.clone(),
        Variant::Adaptive,
        SpikeFn::Relaxed { sigma },
        ThresholdForm::Membrane,
        true,
    );
    Ok(trace.expect("recording requested"))
}

/// Forward pass over a real-valued input matrix, returning the last layer's output.
pub(crate) fn run<S: Scalar>(
    net: &Network<S>,
    input: Matrix<S>,
    variant: Variant,
    spike: SpikeFn,
    form: ThresholdForm,
    record: bool,
) -> (Matrix<S>, Option<Trace<S>>) {
    let steps = input.rows();
    let mut traces = Vec::with_capacity(if record { net.layers.len() } else { 0 });
    let mut x = input.clone();
    for layer in &net.layers {
        let lt = match variant {
            Variant::Adaptive => run_adaptive_layer(layer, &x, steps, spike, form, record),
            Variant::HardReset => run_hard_reset_layer(layer, &x, steps, record),
        };
        if record {
            x = lt.o.clone();
            traces.push(lt);
        } else {
            x = lt.o;
        }
    }
    let trace = record.then(|| Trace {
        variant,
        spike_fn: spike,
        input,
        layers: traces,
    });
    (x, trace)
}

fn run_adaptive_layer<S: Scalar>(
    layer: &Layer<S>,
    x: &Matrix<S>,
    steps: usize,
    spike: SpikeFn,
    form: ThresholdForm,
    record: bool,
) -> LayerTrace<S> {
    let (n_out, n_in) = layer.weights.shape();
    let c = layer.config.coefficients::<S>();
    let rec = |w| if record { w } else { 0 };
    let mut lt = LayerTrace {
        k: Matrix::zeros(steps, rec(n_in)),
        h: Matrix::zeros(steps, rec(n_out)),
        g: Matrix::zeros(steps, rec(n_out)),
        v: Matrix::zeros(steps, rec(n_out)),
        o: Matrix::zeros(steps, n_out),
    };
    let mut k = vec![S::zero(); n_in];
    let mut h = vec![S::zero(); n_out];
    let mut prev = vec![S::zero(); n_out];
    let mut g = vec![S::zero(); n_out];
    let mut v = vec![S::zero(); n_out];
    let mut o = vec![S::zero(); n_out];
    for t in 0..steps {
        advance_adaptive(
            &c,
            x.row(t),
            &layer.weights,
            &mut k,
            &mut h,
            &prev,
            &mut g,
            &mut v,
            &mut o,
            spike,
            form,
        );
        if record {
            lt.k.row_mut(t).copy_from_slice(&k);
            lt.h.row_mut(t).copy_from_slice(&h);
            lt.g.row_mut(t).copy_from_slice(&g);
            lt.v.row_mut(t).copy_from_slice(&v);
        }
        lt.o.row_mut(t).copy_from_slice(&o);
        prev.copy_from_slice(&o);
    }
    lt
}

fn run_hard_reset_layer<S: Scalar>(
    layer: &Layer<S>,
    x: &Matrix<S>,
    steps: usize,
    record: bool,
) -> LayerTrace<S> {
    let n_out = layer.fan_out();
    let c = layer.config.coefficients::<S>();
    let rec = |w| if record { w } else { 0 };
    let mut lt = LayerTrace {
        k: Matrix::zeros(steps, 0),
        h: Matrix::zeros(steps, rec(n_out)),
        g: Matrix::zeros(steps, rec(n_out)),
        v: Matrix::zeros(steps, rec(n_out)),
        o: Matrix::zeros(steps, n_out),
    };
    let mut v = vec![S::zero(); n_out];
    let mut current = vec![S::zero(); n_out];
    let mut o = vec![S::zero(); n_out];
    for t in 0..steps {
        // pre-reset membrane for the record
        let before = if record { v.clone() } else { Vec::new() };
        advance_hard_reset(&c, x.row(t), &layer.weights, &mut v, &mut current, &mut o);
        if record {
            lt.g.row_mut(t).copy_from_slice(&current);
            for i in 0..n_out {
                lt.v.set(t, i, c.alpha * before[i] + current[i]);
            }
        }
        lt.o.row_mut(t).copy_from_slice(&o);
    }
    lt
}
