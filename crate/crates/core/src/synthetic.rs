//! Seeded synthetic datasets that exercise temporal coding at desk scale.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{image_to_raster, GrayImage, SpikeFrames};
use crate::error::{Error, Result};
use crate::train::{Sample, Target, TrainConfig};

/// Classes that share per-channel spike counts and differ only in spike timing.
///
/// A shared base template holds `spikes_per_channel` times per channel. Each
/// class moves every base spike by its own offset in `[-class_shift, class_shift]`,
/// and samples add a uniform jitter in `[-jitter, jitter]`, keeping counts exact.
///
/// With `volleys > 0` spikes are instead grouped into synchronous volleys:
/// every channel joins a fixed subset of `spikes_per_channel` volleys, shared by
/// all classes, and each class places its volleys at its own times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingTaskConfig {
    pub classes: usize,
    pub channels: usize,
    pub steps: usize,
    pub spikes_per_channel: usize,
    pub jitter: usize,
    pub class_shift: usize,
    pub volleys: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for TimingTaskConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            channels: 64,
            steps: 100,
            spikes_per_channel: 4,
            jitter: 1,
            class_shift: 3,
            volleys: 8,
            train_size: 400,
            test_size: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSplit {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn jittered(template: &[Vec<usize>], steps: usize, jitter: usize, rng: &mut ChaCha8Rng) -> Result<SpikeFrames> {
    let trains: Vec<Vec<usize>> = template
        .iter()
        .map(|times| {
            let mut out: Vec<usize> = Vec::with_capacity(times.len());
            for &t in times {
                // redraw on collision so the count stays exact
                loop {
                    let lo = t.saturating_sub(jitter);
                    let hi = (t + jitter).min(steps - 1);
                    let s = rng.random_range(lo..=hi);
                    if !out.contains(&s) {
                        out.push(s);
                        break;
                    }
                }
            }
            out.sort_unstable();
            out
        })
        .collect();
    SpikeFrames::from_spike_times(steps, &trains)
}

pub fn timing_task(cfg: &TimingTaskConfig) -> Result<SyntheticSplit> {
    if cfg.classes < 2 || cfg.channels == 0 {
        return Err(Error::arg("timing task needs at least 2 classes and 1 channel"));
    }
    let templates = if cfg.volleys > 0 {
        volley_templates(cfg)?
    } else {
        shifted_templates(cfg)?
    };
    let make = |n: usize, stream: u64| -> Result<Vec<Sample>> {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(stream);
        (0..n)
            .map(|i| {
                let label = i % cfg.classes;
                Ok(Sample {
                    input: jittered(&templates[label], cfg.steps, cfg.jitter, &mut r)?,
                    target: Target::Label(label),
                })
            })
            .collect()
    };
    Ok(SyntheticSplit {
        train: make(cfg.train_size, 1)?,
        test: make(cfg.test_size, 2)?,
    })
}

/// Random input patterns paired with target rasters.
///
/// Targets are thresholded random images converted with [`image_to_raster`];
/// each pixel fires with probability `target_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationTaskConfig {
    pub patterns: usize,
    pub input_channels: usize,
    pub output_channels: usize,
    pub steps: usize,
    pub input_rate: f64,
    pub target_rate: f64,
    pub seed: u64,
}

impl Default for AssociationTaskConfig {
    fn default() -> Self {
        Self {
            patterns: 20,
            input_channels: 64,
            output_channels: 32,
            steps: 100,
            input_rate: 0.05,
            target_rate: 0.02,
            seed: 0,
        }
    }
}

/// Independent spikes with probability `p` per step and channel.
pub fn bernoulli_frames<R: Rng>(steps: usize, channels: usize, p: f64, rng: &mut R) -> Result<SpikeFrames> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg(format!("spike probability {p} outside [0, 1]")));
    }
    let values = (0..steps * channels).map(|_| u32::from(rng.random_bool(p))).collect();
    SpikeFrames::from_values(steps, channels, values)
}

pub fn association_task(cfg: &AssociationTaskConfig) -> Result<Vec<Sample>> {
    let rate_ok = |p: f64| (0.0..=1.0).contains(&p);
    if !rate_ok(cfg.input_rate) || !rate_ok(cfg.target_rate) {
        return Err(Error::arg("rates must lie in [0, 1]"));
    }
    if cfg.patterns == 0 || cfg.input_channels == 0 || cfg.output_channels == 0 || cfg.steps == 0 {
        return Err(Error::arg("association task dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.patterns)
        .map(|_| {
            let input = bernoulli_frames(cfg.steps, cfg.input_channels, cfg.input_rate, &mut rng)?;
            let pixels = (0..cfg.output_channels * cfg.steps).map(|_| rng.random::<f64>()).collect();
            let image = GrayImage::new(cfg.output_channels, cfg.steps, pixels)?;
            let target = image_to_raster(&image, 1.0 - cfg.target_rate, cfg.steps, cfg.output_channels)?;
            Ok(Sample {
                input,
                target: Target::Raster(target),
            })
        })
        .collect()
}

/// Architecture, initialisation and training settings for a desk-scale run.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub architecture: Vec<usize>,
    pub init_gain: f64,
    pub init_seed: u64,
    pub train: TrainConfig,
}

/// Timing task: 64-64-4, 200 epochs, batch 16, lr 1e-3.
///
/// The large initial gain puts hidden neurons in the strongly driven regime,
/// where one volley lifts the membrane well past threshold.
pub fn timing_preset() -> Preset {
    let mut train = TrainConfig::classification();
    train.epochs = 200;
    train.batch_size = 16;
    train.optimizer.lr = 1e-3;
    train.seed = 1;
    Preset {
        architecture: vec![64, 64, 4],
        init_gain: 16.0,
        init_seed: 1,
        train,
    }
}

/// Association task: 64-128-128-32, 2000 epochs, batch 1, lr 1e-3.
pub fn association_preset() -> Preset {
    let mut train = TrainConfig::association();
    train.epochs = 2000;
    train.batch_size = 1;
    train.seed = 1;
    Preset {
        architecture: vec![64, 128, 128, 32],
        init_gain: 3.0,
        init_seed: 1,
        train,
    }
}

type Templates = Vec<Vec<Vec<usize>>>;

fn shifted_templates(cfg: &TimingTaskConfig) -> Result<Templates> {
    let spacing = 2 * (cfg.jitter + cfg.class_shift) + 1;
    if cfg.spikes_per_channel == 0 || cfg.spikes_per_channel * spacing > cfg.steps {
        return Err(Error::arg("spikes per channel do not fit the window with this jitter and shift"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // slots wider than the total displacement keep one channel's spikes apart
    let slots = cfg.steps / spacing;
    let base: Vec<Vec<usize>> = (0..cfg.channels)
        .map(|_| {
            let mut ts: Vec<usize> = sample(&mut rng, slots, cfg.spikes_per_channel)
                .into_iter()
                .map(|s| s * spacing + cfg.jitter + cfg.class_shift)
                .collect();
            ts.sort_unstable();
            ts
        })
        .collect();
    let shift = cfg.class_shift as i64;
    let templates: Templates = (0..cfg.classes)
        .map(|_| {
            base.iter()
                .map(|ts| {
                    ts.iter()
                        .map(|&t| (t as i64 + rng.random_range(-shift..=shift)) as usize)
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(templates)
}

fn volley_templates(cfg: &TimingTaskConfig) -> Result<Templates> {
    let spacing = 2 * cfg.jitter + 1;
    let slots = cfg.steps / spacing;
    if cfg.spikes_per_channel == 0 || cfg.spikes_per_channel > cfg.volleys || cfg.volleys > slots {
        return Err(Error::arg("volleys do not fit the window, or channels join more volleys than exist"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let membership: Vec<Vec<usize>> = (0..cfg.channels)
        .map(|_| sample(&mut rng, cfg.volleys, cfg.spikes_per_channel).into_vec())
        .collect();
    Ok((0..cfg.classes)
        .map(|_| {
            let mut times: Vec<usize> = sample(&mut rng, slots, cfg.volleys)
                .into_iter()
                .map(|s| s * spacing + cfg.jitter)
                .collect();
            times.sort_unstable();
            membership
                .iter()
                .map(|m| {
                    let mut ts: Vec<usize> = m.iter().map(|&v| times[v]).collect();
                    ts.sort_unstable();
                    ts
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_classes_share_rates() {
        let split = timing_task(&TimingTaskConfig::default()).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (400, 200));
        for s in split.train.iter().chain(&split.test) {
            assert!(s.input.is_binary());
            assert!(s.input.channel_counts().iter().all(|&c| c == 4));
        }
        let again = timing_task(&TimingTaskConfig::default()).unwrap();
        assert_eq!(again.train, split.train);
        assert_ne!(split.train[0].input, split.train[1].input);
    }

    #[test]
    fn association_shapes() {
        let data = association_task(&AssociationTaskConfig::default()).unwrap();
        assert_eq!(data.len(), 20);
        match &data[0].target {
            Target::Raster(r) => assert_eq!((r.steps(), r.channels()), (100, 32)),
            Target::Label(_) => panic!(),
        }
        assert_eq!(data[0].input.channels(), 64);
    }
}
