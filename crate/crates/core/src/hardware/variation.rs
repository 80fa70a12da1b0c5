use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quantize::{quantize_network, QuantSpec};
use crate::error::{Error, Result};
use crate::losses::DistanceConfig;
use crate::matrix::Matrix;
use crate::network::{Network, Variant};
use crate::scalar::Scalar;
use crate::train::{evaluate, Sample, Task};

/// Multiplicative device variation: `w * (1 + e)`, `e ~ N(0, deviation^2)` per weight.
pub fn apply_variation<S: Scalar, R: Rng>(w: &Matrix<S>, deviation: f64, rng: &mut R) -> Result<Matrix<S>> {
    if !(deviation.is_finite() && deviation >= 0.0) {
        return Err(Error::arg(format!("deviation must be finite and >= 0, got {deviation}")));
    }
    if deviation == 0.0 {
        return Ok(w.clone());
    }
    let data = w
        .as_slice()
        .iter()
        .map(|x| {
            let e: f64 = rng.sample(StandardNormal);
            S::lit(x.as_f64() * (1.0 + deviation * e))
        })
        .collect();
    Matrix::from_vec(w.rows(), w.cols(), data)
}

/// Applies variation to every layer from one seeded stream.
pub fn apply_variation_network<S: Scalar>(net: &Network<S>, deviation: f64, seed: u64) -> Result<Network<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    variation_from(net, deviation, &mut rng)
}

fn variation_from<S: Scalar>(net: &Network<S>, deviation: f64, rng: &mut ChaCha8Rng) -> Result<Network<S>> {
    let mut out = net.clone();
    for l in out.layers_mut() {
        l.weights = apply_variation(&l.weights, deviation, rng)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bits: u32,
    pub deviation: f64,
    pub trial: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub bits: u32,
    pub deviation: f64,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

/// Accuracy over a (bits, deviation, trial) grid.
///
/// Each layer is quantized once per bit width; every trial draws a fresh
/// device instance from a stream keyed by `(seed, trial)`, so a given trial
/// sees the same normalized noise at every grid point.
pub fn robustness_sweep<S: Scalar>(
    net: &Network<S>,
    data: &[Sample],
    bits: &[u32],
    deviations: &[f64],
    trials: usize,
    seed: u64,
    variant: Variant,
) -> Result<Vec<SweepRow>> {
    if data.is_empty() {
        return Err(Error::arg("empty evaluation set"));
    }
    if trials == 0 {
        return Err(Error::arg("trials must be at least 1"));
    }
    let quantized = bits
        .iter()
        .map(|&b| quantize_network(net, &QuantSpec::new(b)?))
        .collect::<Result<Vec<_>>>()?;
    for &d in deviations {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::arg(format!("deviation must be finite and >= 0, got {d}")));
        }
    }
    let grid: Vec<(usize, usize, usize)> = (0..bits.len())
        .flat_map(|b| (0..deviations.len()).flat_map(move |d| (0..trials).map(move |t| (b, d, t))))
        .collect();
    grid.par_iter()
        .map(|&(b, d, trial)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let noisy = variation_from(&quantized[b], deviations[d], &mut rng)?;
            let r = evaluate(&noisy, data, Task::Classification, DistanceConfig::default(), variant)?;
            Ok(SweepRow {
                bits: bits[b],
                deviation: deviations[d],
                trial,
                accuracy: r.accuracy.unwrap_or(0.0),
            })
        })
        .collect()
}

/// Mean and population standard deviation per (bits, deviation), in grid order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut out: Vec<(SweepSummary, Vec<f64>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(s, _)| s.bits == r.bits && s.deviation == r.deviation) {
            Some((_, acc)) => acc.push(r.accuracy),
            None => out.push((
                SweepSummary {
                    bits: r.bits,
                    deviation: r.deviation,
                    mean: 0.0,
                    std: 0.0,
                    trials: 0,
                },
                vec![r.accuracy],
            )),
        }
    }
    out.into_iter()
        .map(|(mut s, acc)| {
            let n = acc.len() as f64;
            s.mean = acc.iter().sum::<f64>() / n;
            let constant = acc.iter().all(|&a| a == acc[0]);
            s.std = if constant {
                0.0
            } else {
                (acc.iter().map(|a| (a - s.mean).powi(2)).sum::<f64>() / n).sqrt()
            };
            s.trials = acc.len();
            s
        })
        .collect()
}

/// CSV with columns `bits,deviation,trial,accuracy`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}
