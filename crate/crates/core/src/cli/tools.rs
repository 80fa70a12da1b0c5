use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::args::{parse_deviations, CircuitArgs, ExperimentConfig, GradLoss, GradcheckArgs, SweepArgs};
use super::experiment::sweep_data;
use crate::bptt::{grad_check, GradCheckConfig};
use crate::data::SpikeFrames;
use crate::error::{Error, Result};
use crate::hardware::{
    circuit_sim, demo_two_spike, discrete_equivalent, match_discrete, robustness_sweep, summarize,
    write_sweep_csv, write_trace_csv, CircuitInput, CircuitParams, MatchReport,
};
use crate::losses::{association_loss, rate_softmax_ce, DistanceConfig};
use crate::matrix::Matrix;
use crate::network::{forward, init_weights, ForwardOptions, Variant};
use crate::neuron::NeuronConfig;
use crate::synthetic::bernoulli_frames;
use crate::train::load_checkpoint;

fn out_dir(flag: &Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| "results".into())
}

pub fn run_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let arch = &args.arch;
    if arch.len() < 2 || args.steps == 0 {
        return Err(Error::arg("gradcheck needs at least two layer sizes and one step"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let net = init_weights::<f64>(arch, args.seed, 3.0, NeuronConfig::default())?;
    let x = bernoulli_frames(args.steps, arch[0], 0.3, &mut rng)?.to_matrix::<f64>();
    let n_out = *arch.last().expect("checked length");
    let target = bernoulli_frames(args.steps, n_out, 0.2, &mut rng)?.to_matrix::<f64>();
    let cfg = GradCheckConfig {
        eps: args.eps,
        samples: args.samples,
        seed: args.seed,
        ..GradCheckConfig::default()
    };
    let distance = DistanceConfig::default();
    let mut worst: f64 = 0.0;
    let mut check = |name: &str, r: crate::bptt::GradCheckReport| {
        println!("{name}: max relative error {:.3e} over {} weights", r.max_relative_error, r.checked);
        worst = worst.max(r.max_relative_error);
    };
    if matches!(args.loss, GradLoss::Ce | GradLoss::Both) {
        check("ce", grad_check(&net, |o: &Matrix<f64>| rate_softmax_ce(o, n_out - 1), &x, &cfg)?);
    }
    if matches!(args.loss, GradLoss::Distance | GradLoss::Both) {
        check("distance", grad_check(&net, |o: &Matrix<f64>| association_loss(o, &target, &distance), &x, &cfg)?);
    }
    if !(worst < args.tolerance) {
        return Err(Error::Numeric(format!(
            "gradient check error {worst:.3e} exceeds tolerance {:.1e}",
            args.tolerance
        )));
    }
    Ok(())
}

pub fn run_sweep(args: &SweepArgs, cfg: &ExperimentConfig) -> Result<()> {
    let devs = parse_deviations(&args.dev)?;
    let data = sweep_data(&args.data, cfg)?;
    let net = load_checkpoint::<f64>(&args.checkpoint, None)?.network;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let variant = args.variant.or(cfg.variant).unwrap_or(Variant::Adaptive);
    let rows = robustness_sweep(&net, &data, &args.bits, &devs, args.trials, seed, variant)?;
    let out = out_dir(&args.out, cfg);
    fs::create_dir_all(&out)?;
    write_sweep_csv(&rows, BufWriter::new(fs::File::create(out.join("sweep.csv"))?))?;
    let summary = summarize(&rows);
    let mut w = csv::Writer::from_path(out.join("sweep_summary.csv"))?;
    println!("bits  deviation  mean_accuracy  std");
    for s in &summary {
        println!("{:>4}  {:>9.3}  {:>13.4}  {:.4}", s.bits, s.deviation, s.mean, s.std);
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CircuitReport {
    analog_steps: Vec<Vec<usize>>,
    discrete_steps: Vec<Vec<usize>>,
    tau: f64,
    #[serde(flatten)]
    matching: MatchReport,
}

pub fn run_circuit(args: &CircuitArgs, cfg: &ExperimentConfig) -> Result<()> {
    let mut params = CircuitParams::default();
    if let Some(g) = args.g {
        params.g = Matrix::from_vec(1, 1, vec![g])?;
    }
    params.feedback_gain = args.feedback_gain.unwrap_or(params.feedback_gain);
    params.v_th_bias = args.bias.unwrap_or(params.v_th_bias);
    params.r = args.r.unwrap_or(params.r);
    params.c = args.c.unwrap_or(params.c);
    params.sim_dt = args.sim_dt.unwrap_or(params.sim_dt);
    params.validate()?;
    if args.stride == 0 {
        return Err(Error::arg("stride must be at least 1"));
    }

    let dt = params.dt_phys;
    let (input, duration) = if args.demo {
        demo_two_spike(&params)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let frames = bernoulli_frames(args.steps, params.g.cols(), args.rate, &mut rng)?;
        (CircuitInput::from_frames(&frames, dt), args.steps as f64 * dt)
    };
    let steps = (duration / dt).round() as usize;
    let trains: Vec<Vec<usize>> = input
        .channels
        .iter()
        .map(|ch| ch.iter().map(|t| (t / dt).round() as usize).collect())
        .collect();
    let frames = SpikeFrames::from_spike_times(steps, &trains)?;

    let trace = circuit_sim(&input, &params, duration)?;
    let discrete = discrete_equivalent(&params)?;
    let (out, _) = forward(&discrete, &frames, ForwardOptions::default())?;
    let matching = match_discrete(&trace, &out, 1)?;
    let report = CircuitReport {
        analog_steps: trace.output_steps(),
        discrete_steps: (0..out.channels())
            .map(|j| (0..out.steps()).filter(|&t| out.get(t, j) > 0).collect())
            .collect(),
        tau: params.tau(),
        matching,
    };

    let dir = out_dir(&args.out, cfg);
    fs::create_dir_all(&dir)?;
    write_trace_csv(&trace, BufWriter::new(fs::File::create(dir.join("waveform.csv"))?), args.stride)?;
    fs::write(dir.join("match.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!("analog output steps: {:?}", report.analog_steps);
    println!("discrete output steps: {:?}", report.discrete_steps);
    println!(
        "matched {}, unmatched analog {}, unmatched discrete {}, max deviation {}",
        matching.matched, matching.unmatched_analog, matching.unmatched_discrete, matching.max_deviation
    );
    Ok(())
}
