//! Continuous-time behavioral model of the RC-filter neuron circuit.
//!
//! Each input drives an RC low-pass through a rectangular pulse. The crossbar
//! sums filtered voltages into a bit line read across `R_out`. An ideal
//! comparator compares that voltage with `V_th_bias + h`. A comparator
//! activation detected at time `t` belongs to step `ceil(t / dt_phys) - 1`;
//! the ideal pulse shaper then emits a spike of width `spike_width` and
//! amplitude `feedback_gain * V_dd` starting at the next step boundary, the
//! same clock-aligned form an input spike has. The shaped spike drives a
//! second RC filter whose output `h` raises the threshold. The shaper ignores
//! the comparator until its pulse has ended.
//!
//! Integration is forward Euler at `sim_dt`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::SpikeFrames;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{Layer, Network};
use crate::neuron::NeuronConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// Filter resistance, ohms.
    pub r: f64,
    /// Filter capacitance, farads.
    pub c: f64,
    /// Physical duration of one model step, seconds.
    pub dt_phys: f64,
    pub spike_width: f64,
    pub v_dd: f64,
    pub v_th_bias: f64,
    /// Amplitude of input pulses after level shifting, volts.
    pub input_amplitude: f64,
    /// Bit-line read resistor, ohms.
    pub r_out: f64,
    /// Crossbar conductances, `outputs x inputs`, siemens. Signs are kept.
    pub g: Matrix<f64>,
    /// Feedback pulse amplitude in units of `V_dd`.
    pub feedback_gain: f64,
    /// Integration step, seconds.
    pub sim_dt: f64,
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self {
            r: 4.56e3,
            c: 10.14e-12,
            dt_phys: 10e-9,
            spike_width: 10e-9,
            v_dd: 1.0,
            v_th_bias: 0.55,
            input_amplitude: 1.0,
            r_out: 10e3,
            g: Matrix::from_vec(1, 1, vec![4e-4]).expect("1x1"),
            feedback_gain: 6.0,
            sim_dt: 0.1e-9,
        }
    }
}

fn substeps(len: f64, sim_dt: f64, what: &str) -> Result<usize> {
    let n = len / sim_dt;
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-6 * r {
        return Err(Error::arg(format!("{what} must be a positive multiple of sim_dt")));
    }
    Ok(r as usize)
}

impl CircuitParams {
    pub fn rc(&self) -> f64 {
        self.r * self.c
    }

    /// Discrete time constant `RC / dt_phys`.
    pub fn tau(&self) -> f64 {
        self.rc() / self.dt_phys
    }

    pub fn feedback_amplitude(&self) -> f64 {
        self.feedback_gain * self.v_dd
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.r, self.c, self.dt_phys, self.spike_width, self.sim_dt, self.r_out];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::arg("R, C, dt_phys, spike_width, sim_dt and R_out must be positive"));
        }
        if self.sim_dt > self.dt_phys / 10.0 * (1.0 + 1e-9) {
            return Err(Error::arg(format!(
                "sim_dt {} s is coarser than dt_phys/10 = {} s",
                self.sim_dt,
                self.dt_phys / 10.0
            )));
        }
        if self.spike_width > self.dt_phys * (1.0 + 1e-9) {
            return Err(Error::arg("spike_width must not exceed dt_phys"));
        }
        substeps(self.dt_phys, self.sim_dt, "dt_phys")?;
        substeps(self.spike_width, self.sim_dt, "spike_width")?;
        let finite = [self.v_dd, self.v_th_bias, self.input_amplitude, self.feedback_gain];
        if finite.iter().any(|x| !x.is_finite()) || self.feedback_gain < 0.0 || !self.g.is_finite() {
            return Err(Error::arg("circuit voltages and conductances must be finite"));
        }
        Ok(())
    }

    /// Voltage a unit rectangle of width `spike_width` leaves on an RC filter
    /// one `dt_phys` after it started, per volt of amplitude.
    fn pulse_gain(&self) -> f64 {
        let rc = self.rc();
        (1.0 - (-self.spike_width / rc).exp()) * (-(self.dt_phys - self.spike_width) / rc).exp()
    }
}

/// Spike times per input channel, seconds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CircuitInput {
    pub channels: Vec<Vec<f64>>,
}

impl CircuitInput {
    /// Places a spike at `t * dt_phys` for every set frame entry.
    pub fn from_frames(frames: &SpikeFrames, dt_phys: f64) -> Self {
        let channels = (0..frames.channels())
            .map(|ch| {
                (0..frames.steps())
                    .filter(|&t| frames.get(t, ch) > 0)
                    .map(|t| t as f64 * dt_phys)
                    .collect()
            })
            .collect();
        Self { channels }
    }
}

/// Sampled waveforms, one sample per `sim_dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogTrace {
    pub sim_dt: f64,
    pub times: Vec<f64>,
    /// `[channel][sample]` synapse voltages.
    pub k: Vec<Vec<f64>>,
    /// `[neuron][sample]` bit-line voltages.
    pub g: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub threshold: Vec<Vec<f64>>,
    pub cmp_out: Vec<Vec<f64>>,
    /// Comparator activation times per neuron, seconds.
    pub output_spikes: Vec<Vec<f64>>,
    output_samples: Vec<Vec<usize>>,
    samples_per_step: usize,
}

impl AnalogTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Output spikes mapped to model steps.
    pub fn output_steps(&self) -> Vec<Vec<usize>> {
        self.output_samples
            .iter()
            .map(|v| v.iter().map(|&i| i.div_ceil(self.samples_per_step).saturating_sub(1)).collect())
            .collect()
    }
}

pub fn circuit_sim(input: &CircuitInput, params: &CircuitParams, duration: f64) -> Result<AnalogTrace> {
    params.validate()?;
    let (n_out, n_in) = params.g.shape();
    Error::check_dim("circuit input channels", n_in, input.channels.len())?;
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::arg("duration must be finite and non-negative"));
    }
    let dt = params.sim_dt;
    let n = (duration / dt).round() as usize;
    let per_step = substeps(params.dt_phys, dt, "dt_phys")?;
    let width = substeps(params.spike_width, dt, "spike_width")?;

    let mut drive = vec![vec![false; n]; n_in];
    for (ch, times) in input.channels.iter().enumerate() {
        for &t in times {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::arg(format!("invalid spike time {t} on channel {ch}")));
            }
            let start = (t / dt).round() as usize;
            for slot in drive[ch].iter_mut().skip(start).take(width) {
                *slot = true;
            }
        }
    }

    let rate = dt / params.rc();
    let v_fb = params.feedback_amplitude();
    let mut k = vec![0.0; n_in];
    let mut h = vec![0.0; n_out];
    let mut pulse_start: Vec<Option<usize>> = vec![None; n_out];
    let mut trace = AnalogTrace {
        sim_dt: dt,
        times: Vec::with_capacity(n),
        k: vec![Vec::with_capacity(n); n_in],
        g: vec![Vec::with_capacity(n); n_out],
        h: vec![Vec::with_capacity(n); n_out],
        threshold: vec![Vec::with_capacity(n); n_out],
        cmp_out: vec![Vec::with_capacity(n); n_out],
        output_spikes: vec![Vec::new(); n_out],
        output_samples: vec![Vec::new(); n_out],
        samples_per_step: per_step,
    };

    for i in 0..n {
        trace.times.push(i as f64 * dt);
        for (ch, &ki) in k.iter().enumerate() {
            trace.k[ch].push(ki);
        }
        for j in 0..n_out {
            let g: f64 = params.r_out * params.g.row(j).iter().zip(&k).map(|(gc, ki)| gc * ki).sum::<f64>();
            let thr = params.v_th_bias + h[j];
            let high = g > thr;
            let busy = pulse_start[j].is_some_and(|s| i < s + width);
            if high && !busy {
                pulse_start[j] = Some(i.div_ceil(per_step) * per_step);
                trace.output_spikes[j].push(i as f64 * dt);
                trace.output_samples[j].push(i);
            }
            trace.g[j].push(g);
            trace.h[j].push(h[j]);
            trace.threshold[j].push(thr);
            trace.cmp_out[j].push(if high { params.v_dd } else { 0.0 });
        }
        for (ch, ki) in k.iter_mut().enumerate() {
            let v_in = if drive[ch][i] { params.input_amplitude } else { 0.0 };
            *ki += rate * (v_in - *ki);
        }
        for j in 0..n_out {
            let on = pulse_start[j].is_some_and(|s| (s..s + width).contains(&i));
            let v_s = if on { v_fb } else { 0.0 };
            h[j] += rate * (v_s - h[j]);
        }
    }
    if trace.k.iter().chain(&trace.g).chain(&trace.h).flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("circuit simulation produced non-finite voltages".into()));
    }
    Ok(trace)
}

/// Discrete network with the same dynamics as the circuit, sampled once per `dt_phys`.
///
/// `tau = tau_r = RC/dt_phys`, `V_th = V_th_bias`, each weight is the bit-line
/// voltage one input pulse produces at the end of its step, and `theta` is the
/// feedback voltage one output pulse produces likewise.
pub fn discrete_equivalent(params: &CircuitParams) -> Result<Network<f64>> {
    params.validate()?;
    let pulse = params.pulse_gain();
    let weights = params.g.map(|gc| params.r_out * gc * params.input_amplitude * pulse);
    let config = NeuronConfig {
        tau: params.tau(),
        tau_r: params.tau(),
        theta: params.feedback_amplitude() * pulse,
        v_th: params.v_th_bias,
    };
    Network::new(vec![Layer { weights, config }])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchReport {
    pub matched: usize,
    pub unmatched_analog: usize,
    pub unmatched_discrete: usize,
    /// Largest step offset among matched pairs.
    pub max_deviation: usize,
}

impl MatchReport {
    pub fn within(&self, steps: usize) -> bool {
        self.unmatched_analog == 0 && self.unmatched_discrete == 0 && self.max_deviation <= steps
    }
}

/// Order-preserving alignment of analog and discrete spikes per neuron.
///
/// Pairs may differ by at most `window` steps. The alignment minimises the
/// number of unmatched spikes, then the summed offset.
pub fn match_discrete(analog: &AnalogTrace, discrete: &SpikeFrames, window: usize) -> Result<MatchReport> {
    let steps = analog.output_steps();
    Error::check_dim("matched neurons", discrete.channels(), steps.len())?;
    let mut report = MatchReport::default();
    for (j, a) in steps.iter().enumerate() {
        let d: Vec<usize> = (0..discrete.steps()).filter(|&t| discrete.get(t, j) > 0).collect();
        let r = align(a, &d, window);
        report.matched += r.matched;
        report.unmatched_analog += r.unmatched_analog;
        report.unmatched_discrete += r.unmatched_discrete;
        report.max_deviation = report.max_deviation.max(r.max_deviation);
    }
    Ok(report)
}

fn align(a: &[usize], d: &[usize], window: usize) -> MatchReport {
    // cost = (unmatched, summed offset); carried alongside the running report
    type Cell = ((usize, usize), MatchReport);
    let mut dp: Vec<Vec<Cell>> = vec![vec![((usize::MAX, 0), MatchReport::default()); d.len() + 1]; a.len() + 1];
    dp[0][0] = ((0, 0), MatchReport::default());
    for i in 0..=a.len() {
        for j in 0..=d.len() {
            let ((u, s), r) = dp[i][j];
            if u == usize::MAX {
                continue;
            }
            let mut relax = |ii: usize, jj: usize, cost: (usize, usize), rep: MatchReport| {
                if cost < dp[ii][jj].0 {
                    dp[ii][jj] = (cost, rep);
                }
            };
            if i < a.len() {
                relax(i + 1, j, (u + 1, s), MatchReport { unmatched_analog: r.unmatched_analog + 1, ..r });
            }
            if j < d.len() {
                relax(i, j + 1, (u + 1, s), MatchReport { unmatched_discrete: r.unmatched_discrete + 1, ..r });
            }
            if i < a.len() && j < d.len() {
                let off = a[i].abs_diff(d[j]);
                if off <= window {
                    let rep = MatchReport {
                        matched: r.matched + 1,
                        max_deviation: r.max_deviation.max(off),
                        ..r
                    };
                    relax(i + 1, j + 1, (u, s + off), rep);
                }
            }
        }
    }
    dp[a.len()][d.len()].1
}

/// Two input spikes one step apart on a single synapse.
///
/// With the default parameters the first spike fires the neuron and the
/// raised threshold blocks the second.
pub fn demo_two_spike(params: &CircuitParams) -> Result<(CircuitInput, f64)> {
    Error::check_dim("demo synapses", 1, params.g.cols())?;
    let input = CircuitInput {
        channels: vec![vec![0.0, params.dt_phys]],
    };
    Ok((input, 20.0 * params.dt_phys))
}

/// Writes every `stride`-th sample. Columns are `time_s, k, g, h, threshold,
/// cmp_out`, suffixed with the channel or neuron index when there are several.
pub fn write_trace_csv<W: Write>(trace: &AnalogTrace, w: W, stride: usize) -> Result<()> {
    let stride = stride.max(1);
    let name = |base: &str, idx: usize, count: usize| {
        if count == 1 {
            base.to_string()
        } else {
            format!("{base}_{idx}")
        }
    };
    let (n_in, n_out) = (trace.k.len(), trace.g.len());
    let mut header = vec!["time_s".to_string()];
    header.extend((0..n_in).map(|i| name("k", i, n_in)));
    for base in ["g", "h", "threshold", "cmp_out"] {
        header.extend((0..n_out).map(|j| name(base, j, n_out)));
    }
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(&header)?;
    for i in (0..trace.len()).step_by(stride) {
        let mut rec = vec![trace.times[i].to_string()];
        rec.extend(trace.k.iter().map(|s| s[i].to_string()));
        for sig in [&trace.g, &trace.h, &trace.threshold, &trace.cmp_out] {
            rec.extend(sig.iter().map(|s| s[i].to_string()));
        }
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}
