//! Event-based spike data: raw event streams, binned frames, file formats.

mod canonical;
mod events;
mod frames;
mod manifest;
mod nmnist;
mod raster;

pub use canonical::{load_canonical, read_canonical_file, save_canonical, write_canonical_file};
pub use events::{Event, EventStream};
pub use frames::{bin_events, BinMode, SpikeFrames};
pub use manifest::{Manifest, ManifestEntry};
pub use nmnist::{parse_nmnist_bin, NMNIST_CHANNELS, NMNIST_SIZE};
pub use raster::{image_to_raster, GrayImage};

/// Default number of time steps per sample.
pub const DEFAULT_STEPS: usize = 300;
