use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optimizer::{adamw_step, AdamWConfig, OptimizerState};
use crate::bptt::{backward_with, BackwardMode, Gradients, SurrogateConfig};
use crate::data::SpikeFrames;
use crate::error::{Error, Result};
use crate::losses::{predict_class, DistanceConfig, Objective};
use crate::network::{forward, ForwardOptions, Network, Variant};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Label(usize),
    Raster(SpikeFrames),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub input: SpikeFrames,
    pub target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Association,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub surrogate: SurrogateConfig,
    pub distance: DistanceConfig,
    pub backward: BackwardMode,
}

impl TrainConfig {
    /// Classification defaults: batch 64, learning rate 1e-4.
    pub fn classification() -> Self {
        Self {
            task: Task::Classification,
            epochs: 10,
            batch_size: 64,
            seed: 0,
            optimizer: AdamWConfig {
                lr: 1e-4,
                ..AdamWConfig::default()
            },
            surrogate: SurrogateConfig::default(),
            distance: DistanceConfig::default(),
            backward: BackwardMode::Full,
        }
    }

    /// Pattern-association defaults: batch 64, learning rate 1e-3.
    pub fn association() -> Self {
        Self {
            task: Task::Association,
            optimizer: AdamWConfig {
                lr: 1e-3,
                ..AdamWConfig::default()
            },
            ..Self::classification()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        self.optimizer.validate()?;
        self.surrogate.validate()?;
        self.distance.validate()
    }
}

/// Metrics of one epoch. Training metrics come from the forward passes made
/// during the epoch, before each batch update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    pub eval_loss: Option<f64>,
    pub eval_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub epoch: usize,
    pub batch: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TrainReport<S> {
    /// Last network whose loss and gradients were finite.
    pub network: Network<S>,
    pub optimizer: OptimizerState<S>,
    pub history: Vec<EpochRecord>,
    pub divergence: Option<Divergence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

fn objective<S: Scalar>(target: &Target, task: Task, distance: DistanceConfig) -> Result<Objective<S>> {
    match (target, task) {
        (Target::Label(label), Task::Classification) => Ok(Objective::Classification { label: *label }),
        (Target::Raster(r), Task::Association) => Ok(Objective::Association {
            target: r.to_matrix(),
            distance,
        }),
        _ => Err(Error::arg("sample target does not match the training task")),
    }
}

struct SampleResult<S> {
    loss: S,
    correct: Option<bool>,
    grads: Option<Gradients<S>>,
}

fn run_sample<S: Scalar>(
    net: &Network<S>,
    sample: &Sample,
    task: Task,
    distance: DistanceConfig,
    variant: Variant,
    grad: Option<(&SurrogateConfig, BackwardMode)>,
) -> Result<SampleResult<S>> {
    let opts = ForwardOptions {
        variant,
        record: grad.is_some(),
        ..ForwardOptions::default()
    };
    let (out, trace) = forward(net, &sample.input, opts)?;
    let out_m = out.to_matrix::<S>();
    let (loss, d_out) = objective::<S>(&sample.target, task, distance)?.evaluate(&out_m)?;
    let correct = match sample.target {
        Target::Label(l) => Some(predict_class(&out_m) == l),
        Target::Raster(_) => None,
    };
    let grads = match (grad, trace) {
        (Some((sur, mode)), Some(trace)) => Some(backward_with(net, &trace, &d_out, sur, mode)?),
        _ => None,
    };
    Ok(SampleResult {
        loss,
        correct,
        grads,
    })
}

/// Loss and accuracy over a dataset.
pub fn evaluate<S: Scalar>(
    net: &Network<S>,
    samples: &[Sample],
    task: Task,
    distance: DistanceConfig,
    variant: Variant,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::arg("empty dataset"));
    }
    let results: Vec<Result<SampleResult<S>>> = samples
        .par_iter()
        .map(|s| run_sample(net, s, task, distance, variant, None))
        .collect();
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut labeled = 0usize;
    for r in results {
        let r = r?;
        loss += r.loss.as_f64();
        if let Some(c) = r.correct {
            labeled += 1;
            correct += usize::from(c);
        }
    }
    Ok(EvalReport {
        loss: loss / samples.len() as f64,
        accuracy: (labeled > 0).then(|| correct as f64 / labeled as f64),
    })
}

/// Mini-batch AdamW training with surrogate-gradient BPTT.
///
/// Deterministic for a given seed: the shuffle comes from a seeded stream and
/// per-sample gradients are reduced in batch order regardless of threading.
pub fn train<S: Scalar>(
    net: Network<S>,
    samples: &[Sample],
    eval: Option<&[Sample]>,
    cfg: &TrainConfig,
) -> Result<TrainReport<S>> {
    let shapes = net.layers().iter().map(|l| l.weights.shape()).collect::<Vec<_>>();
    let state = OptimizerState::new(shapes, cfg.optimizer);
    train_with_state(net, state, samples, eval, cfg)
}

/// As [`train`], continuing from an existing optimizer state.
pub fn train_with_state<S: Scalar>(
    mut net: Network<S>,
    mut state: OptimizerState<S>,
    samples: &[Sample],
    eval: Option<&[Sample]>,
    cfg: &TrainConfig,
) -> Result<TrainReport<S>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    for s in samples {
        objective::<S>(&s.target, cfg.task, cfg.distance)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let inv = |n: usize| S::one() / S::lit(n as f64);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut labeled = 0usize;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<Result<SampleResult<S>>> = batch
                .par_iter()
                .map(|&i| {
                    run_sample(
                        &net,
                        &samples[i],
                        cfg.task,
                        cfg.distance,
                        Variant::Adaptive,
                        Some((&cfg.surrogate, cfg.backward)),
                    )
                })
                .collect();
            let mut total = Gradients::zeros_like(&net);
            let mut batch_loss = 0.0;
            for r in results {
                let r = r?;
                batch_loss += r.loss.as_f64();
                if let Some(c) = r.correct {
                    labeled += 1;
                    correct += usize::from(c);
                }
                total.add_assign(r.grads.as_ref().expect("gradients requested"));
            }
            total.scale(inv(batch.len()));
            let diverged = if !batch_loss.is_finite() {
                Some("non-finite loss".to_string())
            } else if !total.is_finite() {
                Some("non-finite gradient".to_string())
            } else {
                None
            };
            if let Some(reason) = diverged {
                info!("diverged at epoch {epoch}, batch {bi}: {reason}");
                return Ok(TrainReport {
                    network: net,
                    optimizer: state,
                    history,
                    divergence: Some(Divergence {
                        epoch,
                        batch: bi,
                        reason,
                    }),
                });
            }
            loss_sum += batch_loss;
            let mut weights: Vec<_> = net.layers_mut().iter_mut().map(|l| &mut l.weights).collect();
            adamw_step(&mut weights, &total.layers, &mut state)?;
        }
        let (eval_loss, eval_accuracy) = match eval {
            Some(e) => {
                let r = evaluate(&net, e, cfg.task, cfg.distance, Variant::Adaptive)?;
                (Some(r.loss), r.accuracy)
            }
            None => (None, None),
        };
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / samples.len() as f64,
            train_accuracy: (labeled > 0).then(|| correct as f64 / labeled as f64),
            eval_loss,
            eval_accuracy,
        };
        debug!("{rec:?}");
        history.push(rec);
    }
    Ok(TrainReport {
        network: net,
        optimizer: state,
        history,
        divergence: None,
    })
}
