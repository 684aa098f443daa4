//! Brightness compensation for lidar images before enhancement.
//!
//! Range images only get a gamma curve. Signal images keep bright pixels
//! (at or above `p_thresh`) untouched and replace the darker ones with the
//! gamma-corrected CLAHE output.

mod clahe;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::GrayImage;

pub use clahe::clahe;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub gamma: f64,
    pub p_thresh: u16,
    pub clahe_clip: f64,
    /// Tile grid as `[rows, cols]`.
    pub clahe_tiles: [usize; 2],
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            p_thresh: 240,
            clahe_clip: 2.0,
            clahe_tiles: [8, 8],
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("preprocess.gamma = {}", self.gamma)));
        }
        if self.p_thresh == 0 || self.p_thresh > 255 {
            return Err(Error::Config(format!(
                "preprocess.p_thresh = {} outside (0, 255]",
                self.p_thresh
            )));
        }
        if !(self.clahe_clip >= 1.0) {
            return Err(Error::Config(format!(
                "preprocess.clahe_clip = {} < 1",
                self.clahe_clip
            )));
        }
        if self.clahe_tiles.iter().any(|&t| t == 0) {
            return Err(Error::Config("preprocess.clahe_tiles must be >= 1x1".into()));
        }
        Ok(())
    }

    fn tiles(&self) -> (usize, usize) {
        (self.clahe_tiles[0], self.clahe_tiles[1])
    }
}

/// `out = round(255 * (in / 255)^gamma)`, applied through a lookup table.
pub fn gamma_correct(img: &GrayImage, gamma: f64) -> GrayImage {
    let lut = gamma_lut(gamma);
    img.map(|v| lut[v as usize])
}

pub(crate) fn gamma_lut(gamma: f64) -> [u8; 256] {
    let mut lut = [0u8; 256];
    for (v, out) in lut.iter_mut().enumerate() {
        *out = (255.0 * (v as f64 / 255.0).powf(gamma))
            .round()
            .clamp(0.0, 255.0) as u8;
    }
    lut
}

pub fn preprocess_range(rng: &GrayImage, cfg: &PreprocessConfig) -> Result<GrayImage> {
    cfg.validate()?;
    Ok(gamma_correct(rng, cfg.gamma))
}

pub fn preprocess_signal(sig: &GrayImage, cfg: &PreprocessConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let threshold = cfg.p_thresh;
    if sig.data().iter().all(|&v| v as u16 >= threshold) {
        return Ok(sig.clone());
    }
    // Histograms see the whole image; only dark pixels take the result.
    let equalized = gamma_correct(&clahe(sig, cfg.clahe_clip, cfg.tiles())?, cfg.gamma);
    let data = sig
        .data()
        .iter()
        .zip(equalized.data())
        .map(|(&orig, &enh)| if (orig as u16) < threshold { enh } else { orig })
        .collect();
    GrayImage::new(sig.width(), sig.height(), data)
}
