use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::Network;
use crate::scalar::Scalar;

/// Uniform symmetric weight quantization with `2^bits - 1` signed levels.
///
/// The scale is `w_max = max|W|`, taken per layer unless fixed explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub bits: u32,
    /// Optional fixed per-layer scales.
    #[serde(default)]
    pub w_max: Option<Vec<f64>>,
}

impl QuantSpec {
    pub fn new(bits: u32) -> Result<Self> {
        let spec = Self { bits, w_max: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=16).contains(&self.bits) {
            return Err(Error::arg(format!("quantization bits must be in 2..=16, got {}", self.bits)));
        }
        if let Some(w) = &self.w_max {
            if w.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::arg("quantization scales must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Positive levels: `2^(bits-1) - 1`.
    pub fn levels(&self) -> u32 {
        (1 << (self.bits - 1)) - 1
    }
}

/// Quantizes `w` to `levels` positive and negative levels over `[-w_max, w_max]`.
///
/// Rounds half away from zero; an all-zero matrix (or `w_max = 0`) is returned unchanged.
pub fn quantize_matrix<S: Scalar>(w: &Matrix<S>, bits: u32, w_max: Option<f64>) -> Result<Matrix<S>> {
    let spec = QuantSpec::new(bits)?;
    if !w.is_finite() {
        return Err(Error::Numeric("cannot quantize non-finite weights".into()));
    }
    let w_max = w_max.unwrap_or_else(|| w.max_abs().as_f64());
    if w_max == 0.0 {
        return Ok(w.clone());
    }
    let levels = spec.levels() as f64;
    Ok(w.map(|x| {
        let q = (x.as_f64() / w_max * levels).round().clamp(-levels, levels);
        S::lit(q.signum() * w_max * (q.abs() / levels))
    }))
}

pub fn quantize_network<S: Scalar>(net: &Network<S>, spec: &QuantSpec) -> Result<Network<S>> {
    spec.validate()?;
    if let Some(s) = &spec.w_max {
        Error::check_dim("quantization scales", net.layers().len(), s.len())?;
    }
    let mut out = net.clone();
    for (i, l) in out.layers_mut().iter_mut().enumerate() {
        let scale = spec.w_max.as_ref().map(|s| s[i]);
        l.weights = quantize_matrix(&l.weights, spec.bits, scale)?;
    }
    Ok(out)
}
