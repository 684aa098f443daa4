//! On-disk dataset layout.
//!
//! ```text
//! dataset/
//!   manifest.json
//!   ground_truth.tum        (optional)
//!   000000_rng.png          16-bit gray range
//!   000000_sig.png          16-bit gray signal
//!   000000_cloud.ply        H*W float32 xyz, row-major pixel order
//! ```
//!
//! Invalid returns are stored as `(0, 0, 0)` with range 0.

mod ply;
mod tum;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{read_gray16_png, write_gray16_png};
use crate::error::{Error, Result};
use crate::types::{Gray16Image, LidarFrame, Trajectory};

pub use ply::{decode_ply, encode_ply, read_ply, write_ply};
pub use tum::{format_tum, load_trajectory, parse_tum, write_trajectory};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub timestamp: f64,
    pub range: String,
    pub signal: String,
    pub cloud: String,
}

impl FrameEntry {
    pub fn standard(index: usize, timestamp: f64) -> Self {
        Self {
            timestamp,
            range: format!("{index:06}_rng.png"),
            signal: format!("{index:06}_sig.png"),
            cloud: format!("{index:06}_cloud.ply"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub sensor: String,
    pub width: usize,
    pub height: usize,
    /// Metres per range image count.
    pub range_unit_m: f64,
    pub frame_count: usize,
    pub frames: Vec<FrameEntry>,
    #[serde(default)]
    pub ground_truth: Option<String>,
}

impl DatasetManifest {
    fn check_shape(&self) -> Result<()> {
        if self.frame_count != self.frames.len() {
            return Err(Error::Consistency(format!(
                "manifest lists {} frames but frame_count is {}",
                self.frames.len(),
                self.frame_count
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Consistency("zero image dimensions".into()));
        }
        Ok(())
    }
}

/// A validated dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::NotFound(path.display().to_string()))
    }
}

impl Dataset {
    /// Reads the manifest and checks that every listed file exists.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        require_file(&path)?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Corrupt {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        manifest.check_shape()?;
        for f in &manifest.frames {
            for name in [&f.range, &f.signal, &f.cloud] {
                require_file(&root.join(name))?;
            }
        }
        if let Some(gt) = &manifest.ground_truth {
            require_file(&root.join(gt))?;
        }
        Ok(Self { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.frame_count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frame_count == 0
    }

    pub fn load_frame(&self, index: usize) -> Result<LidarFrame> {
        let entry = self.manifest.frames.get(index).ok_or_else(|| {
            Error::NotFound(format!("frame {index} of {}", self.manifest.frame_count))
        })?;
        let (w, h) = (self.manifest.width, self.manifest.height);
        let load_image = |name: &str| -> Result<Gray16Image> {
            let path = self.root.join(name);
            require_file(&path)?;
            let img = read_gray16_png(&path)?;
            if img.width() != w || img.height() != h {
                return Err(Error::DimensionMismatch(format!(
                    "{} is {}x{}, manifest says {w}x{h}",
                    path.display(),
                    img.width(),
                    img.height()
                )));
            }
            Ok(img)
        };
        let range = load_image(&entry.range)?;
        let signal = load_image(&entry.signal)?;
        let cloud_path = self.root.join(&entry.cloud);
        require_file(&cloud_path)?;
        let points = read_ply(&cloud_path)?;
        LidarFrame::new(entry.timestamp, range, signal, points)
    }

    pub fn ground_truth(&self) -> Result<Option<Trajectory>> {
        self.manifest
            .ground_truth
            .as_ref()
            .map(|gt| load_trajectory(&self.root.join(gt)))
            .transpose()
    }
}

/// Writes one frame under the standard file names for `index`.
pub fn write_frame(root: &Path, index: usize, frame: &LidarFrame) -> Result<FrameEntry> {
    let entry = FrameEntry::standard(index, frame.timestamp);
    write_gray16_png(&root.join(&entry.range), &frame.range)?;
    write_gray16_png(&root.join(&entry.signal), &frame.signal)?;
    write_ply(&root.join(&entry.cloud), frame.cloud.points())?;
    Ok(entry)
}

pub fn write_manifest(root: &Path, manifest: &DatasetManifest) -> Result<()> {
    let path = root.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}
