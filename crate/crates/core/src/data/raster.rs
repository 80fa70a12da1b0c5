use super::frames::SpikeFrames;
use crate::error::{Error, Result};

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        Error::check_dim("image pixels", height * width, pixels.len())?;
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }
}

/// Converts an image to a raster: pixel `(x, y)` becomes a spike in train `y` at step `x`.
///
/// The image is nearest-neighbour scaled up to `num_trains x steps` first.
pub fn image_to_raster(
    image: &GrayImage,
    threshold: f64,
    steps: usize,
    num_trains: usize,
) -> Result<SpikeFrames> {
    if image.height == 0 || image.width == 0 {
        return Err(Error::arg("empty image"));
    }
    if steps < image.width || num_trains < image.height {
        return Err(Error::arg(format!(
            "raster {num_trains}x{steps} smaller than image {}x{}",
            image.height, image.width
        )));
    }
    let mut frames = SpikeFrames::zeros(steps, num_trains);
    for train in 0..num_trains {
        let sy = train * image.height / num_trains;
        for t in 0..steps {
            let sx = t * image.width / steps;
            if image.get(sy, sx) >= threshold {
                frames.set(t, train, 1);
            }
        }
    }
    Ok(frames)
}
