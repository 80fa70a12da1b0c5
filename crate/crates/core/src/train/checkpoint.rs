//! Binary checkpoint files.
//!
//! Layout: `SNNC`, version `u16`, metadata length `u32`, UTF-8 JSON metadata,
//! then each layer's weights as little-endian `f32` in row-major order, then
//! optionally every layer's first moments followed by every layer's second
//! moments in the same encoding. Values are stored in single precision, so a
//! double-precision network round-trips exactly only if its weights are
//! `f32`-representable (see [`Network::round_to_f32`]).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optimizer::{AdamWConfig, OptimizerState};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{Layer, Network};
use crate::neuron::NeuronConfig;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"SNNC";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub architecture: Vec<usize>,
    pub neurons: Vec<NeuronConfig>,
    pub seed: u64,
    pub optimizer: Option<AdamWConfig>,
    pub optimizer_step: u64,
    pub has_moments: bool,
    /// Free-form training metadata (epochs run, task, final metrics).
    #[serde(default)]
    pub training: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub network: Network<S>,
    pub optimizer: Option<OptimizerState<S>>,
    pub seed: u64,
    pub training: serde_json::Value,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new(network: Network<S>, seed: u64) -> Self {
        Self {
            network,
            optimizer: None,
            seed,
            training: serde_json::Value::Null,
        }
    }

    /// Fails with a shape error naming the first layer that differs from `arch`.
    pub fn check_architecture(&self, arch: &[usize]) -> Result<()> {
        check_arch(&self.network.architecture(), arch)
    }

    fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            architecture: self.network.architecture(),
            neurons: self.network.layers().iter().map(|l| l.config).collect(),
            seed: self.seed,
            optimizer: self.optimizer.as_ref().map(|o| o.config),
            optimizer_step: self.optimizer.as_ref().map_or(0, |o| o.step),
            has_moments: self.optimizer.is_some(),
            training: self.training.clone(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let json = serde_json::to_vec(&self.meta())?;
        let len = u32::try_from(json.len()).map_err(|_| Error::Format("metadata too large".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        let mut blob = |m: &Matrix<S>| -> Result<()> {
            for &x in m.as_slice() {
                w.write_all(&(x.as_f64() as f32).to_le_bytes())?;
            }
            Ok(())
        };
        for l in self.network.layers() {
            blob(&l.weights)?;
        }
        if let Some(opt) = &self.optimizer {
            for m in opt.m.iter().chain(&opt.v) {
                blob(m)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = u32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes")) as usize;
        let meta: CheckpointMeta = serde_json::from_slice(cur.take(len)?)
            .map_err(|e| Error::Integrity(format!("checkpoint metadata: {e}")))?;
        let arch = &meta.architecture;
        if arch.len() < 2 || meta.neurons.len() != arch.len() - 1 {
            return Err(Error::Integrity("inconsistent architecture metadata".into()));
        }
        let shapes: Vec<(usize, usize)> = arch.windows(2).map(|p| (p[1], p[0])).collect();
        let read_blobs = |cur: &mut Cursor| -> Result<Vec<Matrix<S>>> {
            shapes
                .iter()
                .map(|&(r, c)| {
                    let raw = cur.take(r * c * 4)?;
                    let data = raw
                        .chunks_exact(4)
                        .map(|b| S::lit(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64))
                        .collect();
                    Matrix::from_vec(r, c, data)
                })
                .collect()
        };
        let weights = read_blobs(&mut cur)?;
        let optimizer = match (meta.has_moments, meta.optimizer) {
            (true, Some(config)) => {
                let m = read_blobs(&mut cur)?;
                let v = read_blobs(&mut cur)?;
                Some(OptimizerState {
                    m,
                    v,
                    step: meta.optimizer_step,
                    config,
                })
            }
            (true, None) => return Err(Error::Integrity("moments present without optimizer settings".into())),
            (false, _) => None,
        };
        if cur.pos != bytes.len() {
            return Err(Error::Integrity(format!(
                "{} unexpected trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        let layers = weights
            .into_iter()
            .zip(&meta.neurons)
            .map(|(weights, &config)| Layer { weights, config })
            .collect();
        Ok(Self {
            network: Network::new(layers)?,
            optimizer,
            seed: meta.seed,
            training: meta.training,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Integrity(format!(
                "checkpoint truncated: needed {n} bytes at offset {}, {} available",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

fn check_arch(found: &[usize], expected: &[usize]) -> Result<()> {
    let layers = found.len().max(expected.len()).saturating_sub(1);
    let shape = |a: &[usize], i: usize| match (a.get(i), a.get(i + 1)) {
        (Some(&i_), Some(&o)) => (o, i_),
        _ => (0, 0),
    };
    for i in 0..layers {
        let (e, f) = (shape(expected, i), shape(found, i));
        if e != f {
            return Err(Error::Shape {
                layer: i,
                expected: e,
                found: f,
            });
        }
    }
    Ok(())
}

pub fn save_checkpoint<S: Scalar>(path: impl AsRef<Path>, ckpt: &Checkpoint<S>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    ckpt.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint; with `expected`, also checks the architecture.
pub fn load_checkpoint<S: Scalar>(path: impl AsRef<Path>, expected: Option<&[usize]>) -> Result<Checkpoint<S>> {
    let ckpt = Checkpoint::read_from(BufReader::new(File::open(path)?))?;
    if let Some(arch) = expected {
        ckpt.check_architecture(arch)?;
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_weights;

    fn sample() -> Checkpoint<f32> {
        let net = init_weights::<f32>(&[6, 5, 3], 2, 1.0, NeuronConfig::default()).unwrap();
        let mut opt = OptimizerState::new([(5, 6), (3, 5)], AdamWConfig::default());
        opt.step = 7;
        opt.m[1].set(2, 4, 0.25);
        opt.v[0].set(0, 0, 1e-6);
        Checkpoint {
            network: net,
            optimizer: Some(opt),
            seed: 99,
            training: serde_json::json!({"epochs": 3}),
        }
    }

    fn bytes(c: &Checkpoint<f32>) -> Vec<u8> {
        let mut b = Vec::new();
        c.write_to(&mut b).unwrap();
        b
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let back = Checkpoint::<f32>::read_from(&bytes(&c)[..]).unwrap();
        assert_eq!(back, c);
        let plain = Checkpoint::new(c.network.clone(), 1);
        assert_eq!(Checkpoint::<f32>::read_from(&bytes(&plain)[..]).unwrap(), plain);
    }

    #[test]
    fn header_layout() {
        let b = bytes(&sample());
        assert_eq!(&b[..4], b"SNNC");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        let len = u32::from_le_bytes(b[6..10].try_into().unwrap()) as usize;
        let weights = 6 * 5 + 5 * 3;
        assert_eq!(b.len(), 10 + len + 3 * weights * 4);
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let b = bytes(&sample());
        for cut in [3, 8, 20, b.len() - 1] {
            let err = Checkpoint::<f32>::read_from(&b[..cut]).unwrap_err();
            assert!(matches!(err, Error::Integrity(_) | Error::Format(_)), "{cut}: {err}");
        }
        let err = Checkpoint::<f32>::read_from(&b[..b.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        let mut longer = b.clone();
        longer.push(0);
        assert!(matches!(
            Checkpoint::<f32>::read_from(&longer[..]).unwrap_err(),
            Error::Integrity(_)
        ));
    }

    #[test]
    fn version_mismatch() {
        let mut b = bytes(&sample());
        b[4] = 2;
        assert!(matches!(Checkpoint::<f32>::read_from(&b[..]).unwrap_err(), Error::Format(_)));
    }

    #[test]
    fn architecture_mismatch_names_layer() {
        let c = sample();
        match c.check_architecture(&[6, 5, 4]).unwrap_err() {
            Error::Shape { layer, expected, found } => {
                assert_eq!(layer, 1);
                assert_eq!(expected, (4, 5));
                assert_eq!(found, (3, 5));
            }
            e => panic!("{e}"),
        }
        assert!(matches!(c.check_architecture(&[6, 5, 3, 2]), Err(Error::Shape { layer: 2, .. })));
        c.check_architecture(&[6, 5, 3]).unwrap();
    }
}
