use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Variant;

#[derive(Debug, Parser)]
#[command(name = "snn-temporal", version, about = "Adaptive-threshold spiking networks: training, evaluation and hardware models")]
pub struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert raw datasets into canonical event files plus a manifest.
    Convert(ConvertArgs),
    /// Train a classifier.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Train on the pattern-association task.
    Associate(TrainArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Accuracy under weight quantization and device variation.
    Sweep(SweepArgs),
    /// Simulate the analog neuron circuit.
    Circuit(CircuitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    NmnistDir,
    ImageDir,
    Canonical,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub source: Source,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Split name recorded in the manifest.
    #[arg(long)]
    pub split: Option<String>,
    /// Raster length for image sources.
    #[arg(long, default_value_t = crate::data::DEFAULT_STEPS)]
    pub steps: usize,
    /// Raster trains for image sources.
    #[arg(long, default_value_t = 300)]
    pub trains: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

/// Dataset selection shared by experiment commands.
#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Use the built-in synthetic task instead of manifests.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    #[arg(long)]
    pub test_manifest: Option<PathBuf>,
    /// Time steps per sample when binning event files.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Seed of the synthetic data generator.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Layer sizes, comma separated, input first.
    #[arg(long, value_delimiter = ',')]
    pub arch: Option<Vec<usize>>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub tau_r: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub v_th: Option<f64>,
    #[arg(long)]
    pub init_gain: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OptimArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tau_m: Option<f64>,
    #[arg(long)]
    pub tau_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Start from this checkpoint instead of a fresh initialisation.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Neuron dynamics for the reported evaluation.
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Evaluate the association loss instead of classification accuracy.
    #[arg(long)]
    pub association: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradLoss {
    Ce,
    Distance,
    Both,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_delimiter = ',', default_value = "8,16,4")]
    pub arch: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 128)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = GradLoss::Both)]
    pub loss: GradLoss,
    /// Exit status is 0 only if every error is below this.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "4,5")]
    pub bits: Vec<u32>,
    /// Deviations as `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "0:0.5:0.1")]
    pub dev: String,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CircuitArgs {
    /// Two input spikes one step apart (threshold suppression).
    #[arg(long)]
    pub demo: bool,
    /// Poisson input probability per step when not in demo mode.
    #[arg(long, default_value_t = 0.3)]
    pub rate: f64,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Synapse conductance, siemens.
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub feedback_gain: Option<f64>,
    #[arg(long)]
    pub bias: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub sim_dt: Option<f64>,
    /// Write every n-th sample of the waveform.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Experiment settings read from `--config`. Every field is optional and
/// uses the flag's name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synthetic: Option<bool>,
    pub train_manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    pub steps: Option<usize>,
    pub data_seed: Option<u64>,
    pub arch: Option<Vec<usize>>,
    pub tau: Option<f64>,
    pub tau_r: Option<f64>,
    pub theta: Option<f64>,
    pub v_th: Option<f64>,
    pub init_gain: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub seed: Option<u64>,
    pub sigma: Option<f64>,
    pub tau_m: Option<f64>,
    pub tau_s: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub variant: Option<Variant>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::arg(format!("config {}: {e}", path.display())))
    }
}

/// Parses `start:stop:step` (inclusive) or `a,b,c`.
pub fn parse_deviations(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::arg(format!("invalid deviation list {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    let values = match parts.as_slice() {
        [a, b, s] => {
            let (a, b, s) = (num(a)?, num(b)?, num(s)?);
            if !(s > 0.0) || b < a {
                return Err(bad());
            }
            let n = ((b - a) / s + 1e-9).floor() as usize + 1;
            (0..n).map(|i| ((a + i as f64 * s) * 1e12).round() / 1e12).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() || values.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(bad());
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviation_grid() {
        assert_eq!(parse_deviations("0:0.5:0.1").unwrap(), vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(parse_deviations("0.2,0").unwrap(), vec![0.2, 0.0]);
        assert!(parse_deviations("0:1:0").is_err());
        assert!(parse_deviations("-1").is_err());
    }

    #[test]
    fn config_rejects_unknown_fields() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"epochs": 3}"#).is_ok());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"epoch": 3}"#).is_err());
    }
}
