use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::args::{DataArgs, EvalArgs, ExperimentConfig, ModelArgs, OptimArgs, TrainArgs};
use crate::bptt::SurrogateConfig;
use crate::data::{bin_events, read_canonical_file, BinMode, Manifest, SpikeFrames, DEFAULT_STEPS};
use crate::error::{Error, Result};
use crate::losses::DistanceConfig;
use crate::network::{forward, init_weights, ForwardOptions, Network, Variant};
use crate::neuron::NeuronConfig;
use crate::synthetic::{
    association_preset, association_task, timing_preset, timing_task, AssociationTaskConfig, Preset,
    TimingTaskConfig,
};
use crate::train::{
    evaluate, load_checkpoint, save_checkpoint, train_with_state, Checkpoint, Divergence, EvalReport,
    OptimizerState, Sample, Target, Task, TrainConfig,
};

const DEFAULT_OUT: &str = "results";

fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

struct Dataset {
    train: Vec<Sample>,
    eval: Option<Vec<Sample>>,
    inputs: usize,
    outputs: usize,
    synthetic: bool,
}

impl Dataset {
    fn eval_set(&self) -> &[Sample] {
        self.eval.as_deref().unwrap_or(&self.train)
    }
}

fn load_frames(path: &Path, steps: usize, channels: u32) -> Result<SpikeFrames> {
    let stream = read_canonical_file(path)?;
    if stream.num_channels() != channels {
        return Err(Error::Format(format!(
            "{}: {} channels, manifest declares {channels}",
            path.display(),
            stream.num_channels()
        )));
    }
    bin_events(&stream, steps, BinMode::Binary)
}

fn load_manifest(path: &Path, steps: usize, task: Task) -> Result<(Vec<Sample>, u32, usize)> {
    let manifest = Manifest::load(path)?;
    let channels = manifest.num_channels;
    let samples = manifest
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            let input = load_frames(&Manifest::resolve(path, &entry.path), steps, channels)?;
            let target = match task {
                Task::Classification => Target::Label(entry.label.ok_or_else(|| {
                    Error::Format(format!("{}: sample {i} has no label", path.display()))
                })?),
                Task::Association => {
                    let t = entry.target.as_ref().ok_or_else(|| {
                        Error::Format(format!("{}: sample {i} has no target raster", path.display()))
                    })?;
                    let stream = read_canonical_file(Manifest::resolve(path, t))?;
                    Target::Raster(bin_events(&stream, steps, BinMode::Binary)?)
                }
            };
            Ok(Sample { input, target })
        })
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        return Err(Error::Format(format!("{}: manifest lists no samples", path.display())));
    }
    let outputs = match task {
        Task::Classification => manifest.num_classes()?,
        Task::Association => match &samples[0].target {
            Target::Raster(r) => r.channels(),
            Target::Label(_) => unreachable!("association targets are rasters"),
        },
    };
    Ok((samples, channels, outputs))
}

fn load_dataset(data: &DataArgs, cfg: &ExperimentConfig, task: Task, need_train: bool) -> Result<Dataset> {
    let synthetic = data.synthetic || cfg.synthetic.unwrap_or(false);
    let data_seed = pick(data.data_seed, cfg.data_seed, 0);
    if synthetic {
        return Ok(match task {
            Task::Classification => {
                let split = timing_task(&TimingTaskConfig {
                    seed: data_seed,
                    ..TimingTaskConfig::default()
                })?;
                Dataset {
                    train: split.train,
                    eval: Some(split.test),
                    inputs: 64,
                    outputs: 4,
                    synthetic: true,
                }
            }
            Task::Association => {
                let c = AssociationTaskConfig {
                    seed: data_seed,
                    ..AssociationTaskConfig::default()
                };
                Dataset {
                    train: association_task(&c)?,
                    eval: None,
                    inputs: c.input_channels,
                    outputs: c.output_channels,
                    synthetic: true,
                }
            }
        });
    }
    let steps = pick(data.steps, cfg.steps, DEFAULT_STEPS);
    let train_path = data.train_manifest.clone().or_else(|| cfg.train_manifest.clone());
    let test_path = data.test_manifest.clone().or_else(|| cfg.test_manifest.clone());
    let (train_path, test_path) = match (train_path, test_path) {
        (Some(tr), te) => (tr, te),
        (None, Some(te)) if !need_train => (te, None),
        _ => return Err(Error::arg("no dataset: pass --synthetic or --train-manifest")),
    };
    let (train, channels, outputs) = load_manifest(&train_path, steps, task)?;
    let eval = match test_path {
        Some(p) => {
            let (test, c, o) = load_manifest(&p, steps, task)?;
            if c != channels || (task == Task::Association && o != outputs) {
                return Err(Error::Format("train and test manifests disagree on shape".into()));
            }
            Some(test)
        }
        None => None,
    };
    Ok(Dataset {
        train,
        eval,
        inputs: channels as usize,
        outputs,
        synthetic: false,
    })
}

struct Plan {
    task: Task,
    architecture: Vec<usize>,
    neuron: NeuronConfig,
    init_gain: f64,
    init_seed: u64,
    train: TrainConfig,
    checkpoint: Option<PathBuf>,
    variant: Variant,
    out: PathBuf,
}

fn plan(task: Task, model: &ModelArgs, optim: &OptimArgs, args: &TrainArgs, cfg: &ExperimentConfig, data: &Dataset) -> Result<Plan> {
    let preset: Preset = match (task, data.synthetic) {
        (Task::Classification, true) => timing_preset(),
        (Task::Association, true) => association_preset(),
        (Task::Classification, false) => Preset {
            architecture: vec![data.inputs, 500, 500, data.outputs],
            init_gain: 3.0,
            init_seed: 0,
            train: TrainConfig::classification(),
        },
        (Task::Association, false) => Preset {
            architecture: vec![data.inputs, 500, 500, data.outputs],
            init_gain: 3.0,
            init_seed: 0,
            train: TrainConfig::association(),
        },
    };
    let d = NeuronConfig::default();
    let neuron = NeuronConfig {
        tau: pick(model.tau, cfg.tau, d.tau),
        tau_r: pick(model.tau_r, cfg.tau_r, d.tau_r),
        theta: pick(model.theta, cfg.theta, d.theta),
        v_th: pick(model.v_th, cfg.v_th, d.v_th),
    };
    neuron.validate()?;
    let seed = pick(optim.seed, cfg.seed, preset.train.seed);
    let mut train = preset.train;
    train.epochs = pick(optim.epochs, cfg.epochs, train.epochs);
    train.batch_size = pick(optim.batch_size, cfg.batch_size, train.batch_size);
    train.optimizer.lr = pick(optim.lr, cfg.lr, train.optimizer.lr);
    train.optimizer.weight_decay = pick(optim.weight_decay, cfg.weight_decay, train.optimizer.weight_decay);
    train.seed = seed;
    train.surrogate = SurrogateConfig {
        sigma: pick(optim.sigma, cfg.sigma, train.surrogate.sigma),
    };
    train.distance = DistanceConfig {
        tau_m: pick(optim.tau_m, cfg.tau_m, train.distance.tau_m),
        tau_s: pick(optim.tau_s, cfg.tau_s, train.distance.tau_s),
    };
    train.validate()?;
    let architecture = model.arch.clone().or_else(|| cfg.arch.clone()).unwrap_or(preset.architecture);
    if architecture.first() != Some(&data.inputs) || architecture.last() != Some(&data.outputs) {
        return Err(Error::arg(format!(
            "architecture {architecture:?} must start with {} inputs and end with {} outputs",
            data.inputs, data.outputs
        )));
    }
    let init_gain = pick(model.init_gain, cfg.init_gain, preset.init_gain);
    if !(init_gain.is_finite() && init_gain >= 0.0) {
        return Err(Error::arg("init gain must be finite and non-negative"));
    }
    Ok(Plan {
        task,
        architecture,
        neuron,
        init_gain,
        init_seed: if optim.seed.or(cfg.seed).is_some() { seed } else { preset.init_seed },
        train,
        checkpoint: args.checkpoint.clone().or_else(|| cfg.checkpoint.clone()),
        variant: pick(args.variant, cfg.variant, Variant::Adaptive),
        out: args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into()),
    })
}

#[derive(Serialize)]
struct Metrics<'a> {
    task: Task,
    architecture: &'a [usize],
    epochs_run: usize,
    train_samples: usize,
    eval_samples: usize,
    final_train_loss: Option<f64>,
    eval: BTreeMap<&'static str, EvalReport>,
    divergence: Option<&'a Divergence>,
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Adaptive => "adaptive",
        Variant::HardReset => "hard_reset",
    }
}

fn evaluate_both(net: &Network<f64>, data: &[Sample], plan: &Plan) -> Result<BTreeMap<&'static str, EvalReport>> {
    [Variant::Adaptive, Variant::HardReset]
        .into_iter()
        .map(|v| Ok((variant_name(v), evaluate(net, data, plan.task, plan.train.distance, v)?)))
        .collect()
}

fn print_report(label: &str, r: &EvalReport) {
    match r.accuracy {
        Some(a) => println!("{label}: loss {:.6}, accuracy {:.2}%", r.loss, 100.0 * a),
        None => println!("{label}: loss {:.6}", r.loss),
    }
}

fn write_raster_csv(path: &Path, frames: &SpikeFrames) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    w.write_record(["time", "train_index", "value"])?;
    for t in 0..frames.steps() {
        for ch in 0..frames.channels() {
            w.write_record([t.to_string(), ch.to_string(), frames.get(t, ch).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `train` and `associate`.
pub fn run_training(task: Task, args: &TrainArgs, cfg: &ExperimentConfig) -> Result<()> {
    let data = load_dataset(&args.data, cfg, task, true)?;
    let plan = plan(task, &args.model, &args.optim, args, cfg, &data)?;
    let (mut net, state) = match &plan.checkpoint {
        Some(p) => {
            let ckpt = load_checkpoint::<f64>(p, Some(&plan.architecture))?;
            (ckpt.network, ckpt.optimizer)
        }
        None => (init_weights(&plan.architecture, plan.init_seed, plan.init_gain, plan.neuron)?, None),
    };
    if plan.checkpoint.is_none() {
        net.round_to_f32();
    }

    if plan.train.epochs == 0 {
        let r = evaluate(&net, data.eval_set(), task, plan.train.distance, plan.variant)?;
        print_report(&format!("eval ({})", variant_name(plan.variant)), &r);
        return Ok(());
    }

    let shapes = net.layers().iter().map(|l| l.weights.shape()).collect::<Vec<_>>();
    let mut state = state.unwrap_or_else(|| OptimizerState::new(shapes, plan.train.optimizer));
    state.config = plan.train.optimizer;
    info!("training {:?} for {} epochs on {} samples", plan.architecture, plan.train.epochs, data.train.len());
    let report = train_with_state(net, state, &data.train, data.eval.as_deref(), &plan.train)?;
    let mut net = report.network;
    net.round_to_f32();

    let eval = evaluate_both(&net, data.eval_set(), &plan)?;
    fs::create_dir_all(&plan.out)?;
    let mut ckpt = Checkpoint::new(net.clone(), plan.train.seed);
    ckpt.optimizer = Some(report.optimizer);
    ckpt.training = serde_json::json!({
        "task": task,
        "epochs": report.history.len(),
        "batch_size": plan.train.batch_size,
        "init_gain": plan.init_gain,
        "distance": plan.train.distance,
        "surrogate": plan.train.surrogate,
    });
    save_checkpoint(plan.out.join("checkpoint.snnc"), &ckpt)?;

    let mut w = csv::Writer::from_path(plan.out.join("history.csv"))?;
    for rec in &report.history {
        w.serialize(rec)?;
    }
    w.flush()?;

    let metrics = Metrics {
        task,
        architecture: &plan.architecture,
        epochs_run: report.history.len(),
        train_samples: data.train.len(),
        eval_samples: data.eval_set().len(),
        final_train_loss: report.history.last().map(|h| h.train_loss),
        eval: eval.clone(),
        divergence: report.divergence.as_ref(),
    };
    fs::write(plan.out.join("metrics.json"), serde_json::to_string_pretty(&metrics)? + "\n")?;

    if task == Task::Association {
        let dir = plan.out.join("rasters");
        fs::create_dir_all(&dir)?;
        for (i, s) in data.eval_set().iter().enumerate() {
            let (out, _) = forward(&net, &s.input, ForwardOptions::default())?;
            write_raster_csv(&dir.join(format!("pattern_{i:03}_output.csv")), &out)?;
            if let Target::Raster(t) = &s.target {
                write_raster_csv(&dir.join(format!("pattern_{i:03}_target.csv")), t)?;
            }
        }
    }

    if let Some(last) = report.history.last() {
        println!("epoch {}: train loss {:.6}", last.epoch, last.train_loss);
    }
    print_report(&format!("eval ({})", variant_name(plan.variant)), &eval[variant_name(plan.variant)]);
    println!("wrote {}", plan.out.display());
    if let Some(d) = report.divergence {
        warn!("stopped early; checkpoint holds the last finite state");
        return Err(Error::Diverged {
            epoch: d.epoch,
            reason: d.reason,
        });
    }
    Ok(())
}

pub fn run_eval(args: &EvalArgs, cfg: &ExperimentConfig) -> Result<()> {
    let task = if args.association { Task::Association } else { Task::Classification };
    let data = load_dataset(&args.data, cfg, task, false)?;
    let ckpt = load_checkpoint::<f64>(&args.checkpoint, None)?;
    let net = ckpt.network;
    if net.num_inputs() != data.inputs || net.num_outputs() != data.outputs {
        return Err(Error::arg(format!(
            "checkpoint maps {} -> {} but the data has {} inputs and {} outputs",
            net.num_inputs(),
            net.num_outputs(),
            data.inputs,
            data.outputs
        )));
    }
    let variant = pick(args.variant, cfg.variant, Variant::Adaptive);
    let distance = ckpt
        .training
        .get("distance")
        .and_then(|d| serde_json::from_value(d.clone()).ok())
        .unwrap_or_default();
    let r = evaluate(&net, data.eval_set(), task, distance, variant)?;
    print_report(&format!("eval ({})", variant_name(variant)), &r);
    if let Some(out) = args.out.clone().or_else(|| cfg.out.clone()) {
        fs::create_dir_all(&out)?;
        let mut doc = BTreeMap::new();
        doc.insert(variant_name(variant), r);
        fs::write(out.join("eval.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    }
    Ok(())
}

/// Evaluation samples for `sweep`.
pub(crate) fn sweep_data(data: &DataArgs, cfg: &ExperimentConfig) -> Result<Vec<Sample>> {
    let d = load_dataset(data, cfg, Task::Classification, false)?;
    Ok(match d.eval {
        Some(e) => e,
        None => d.train,
    })
}
