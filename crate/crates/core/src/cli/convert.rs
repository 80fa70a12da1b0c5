use std::fs;
use std::path::{Path, PathBuf};

use log::{error, info, warn};
use walkdir::WalkDir;

use super::args::{ConvertArgs, Source};
use crate::data::{
    image_to_raster, parse_nmnist_bin, read_canonical_file, write_canonical_file, EventStream, GrayImage,
    Manifest, ManifestEntry, NMNIST_CHANNELS,
};
use crate::error::{Error, Result};

fn files_with_ext(root: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::arg(format!("{} is not a directory", root.display())));
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        let ext = entry.path().extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if entry.file_type().is_file() && ext.is_some_and(|e| exts.contains(&e.as_str())) {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// Numeric name of the parent directory, the usual class layout.
fn label_from_parent(path: &Path) -> Option<usize> {
    path.parent()?.file_name()?.to_str()?.parse().ok()
}

fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let pixels = img.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect();
    GrayImage::new(h as usize, w as usize, pixels)
}

/// Converts every file under `--input`; returns a data error if any failed.
pub fn run(args: &ConvertArgs) -> Result<()> {
    if args.source == Source::ImageDir && (args.steps == 0 || args.trains == 0) {
        return Err(Error::arg("--steps and --trains must be positive"));
    }
    let exts: &[&str] = match args.source {
        Source::NmnistDir => &["bin"],
        Source::ImageDir => &["png"],
        Source::Canonical => &["spke"],
    };
    let files = files_with_ext(&args.input, exts)?;
    let channels = match args.source {
        Source::NmnistDir => NMNIST_CHANNELS,
        Source::ImageDir => args.trains as u32,
        Source::Canonical => 0,
    };
    let mut manifest = Manifest::new(channels);
    manifest.split = args.split.clone();
    if files.is_empty() {
        warn!("no input files under {}", args.input.display());
    }
    fs::create_dir_all(&args.out)?;

    let mut failures = 0usize;
    for file in &files {
        let rel = file.strip_prefix(&args.input).unwrap_or(file);
        let converted = (|| -> Result<(PathBuf, EventStream)> {
            let stream = match args.source {
                Source::NmnistDir => parse_nmnist_bin(&fs::read(file)?)?,
                Source::ImageDir => {
                    let frames = image_to_raster(&load_gray(file)?, args.threshold, args.steps, args.trains)?;
                    // one tick per step, so re-binning at the same length is the identity
                    frames.to_events(1)?
                }
                Source::Canonical => read_canonical_file(file)?,
            };
            Ok((rel.with_extension("spke"), stream))
        })();
        match converted {
            Ok((rel_out, stream)) => {
                if args.source == Source::Canonical {
                    if manifest.num_channels == 0 {
                        manifest.num_channels = stream.num_channels();
                    } else if manifest.num_channels != stream.num_channels() {
                        error!("{}: {} channels, expected {}", file.display(), stream.num_channels(), manifest.num_channels);
                        failures += 1;
                        continue;
                    }
                }
                let dest = args.out.join(&rel_out);
                if let Some(parent) = dest.parent() {
                    fs::create_dir_all(parent)?;
                }
                write_canonical_file(&dest, &stream)?;
                manifest.samples.push(ManifestEntry {
                    path: rel_out,
                    label: if args.source == Source::ImageDir { None } else { label_from_parent(file) },
                    target: None,
                });
            }
            Err(e) => {
                error!("{}: {e}", file.display());
                failures += 1;
            }
        }
    }
    manifest.save(args.out.join("manifest.json"))?;
    info!("converted {} of {} files", manifest.samples.len(), files.len());
    println!("converted {} of {} files", manifest.samples.len(), files.len());
    if failures > 0 {
        return Err(Error::Format(format!("{failures} of {} files could not be converted", files.len())));
    }
    Ok(())
}
