//! Keypoint detection with descriptors on image variants.
//!
//! RGB variants are processed one channel at a time; the per-channel
//! results are concatenated and merged so that at most one keypoint (the
//! strongest) survives per integer pixel cell.

pub mod brief;
mod fast;
mod shi_tomasi;

use std::collections::HashSet;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::external::run_filter;
use crate::types::{GrayImage, ImageVariant, VariantImage};

pub use brief::{describe_brief, hamming, BinaryDescriptor, BRIEF_MARGIN};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub score: f32,
    /// 0 for gray variants; 0/1/2 for R/G/B.
    pub channel: u8,
}

impl Keypoint {
    pub fn cell(&self) -> (i64, i64) {
        (self.x.round() as i64, self.y.round() as i64)
    }
}

/// Descriptors of one detection batch; all share kind and length.
#[derive(Clone, Debug, PartialEq)]
pub enum Descriptors {
    Binary(Vec<BinaryDescriptor>),
    Real { dim: usize, data: Vec<f32> },
}

impl Descriptors {
    pub fn len(&self) -> usize {
        match self {
            Descriptors::Binary(d) => d.len(),
            Descriptors::Real { dim, data } => {
                if *dim == 0 {
                    0
                } else {
                    data.len() / dim
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn real(&self, i: usize) -> Option<&[f32]> {
        match self {
            Descriptors::Real { dim, data } => Some(&data[i * dim..(i + 1) * dim]),
            Descriptors::Binary(_) => None,
        }
    }

    fn select(&self, order: &[usize]) -> Self {
        match self {
            Descriptors::Binary(d) => Descriptors::Binary(order.iter().map(|&i| d[i]).collect()),
            Descriptors::Real { dim, data } => Descriptors::Real {
                dim: *dim,
                data: order
                    .iter()
                    .flat_map(|&i| data[i * dim..(i + 1) * dim].iter().copied())
                    .collect(),
            },
        }
    }

    fn concat(parts: Vec<Descriptors>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let Some(mut acc) = iter.next() else {
            return Ok(Descriptors::Binary(Vec::new()));
        };
        for part in iter {
            match (&mut acc, part) {
                (Descriptors::Binary(a), Descriptors::Binary(b)) => a.extend(b),
                (Descriptors::Real { dim: da, data: a }, Descriptors::Real { dim: db, data: b }) => {
                    if a.is_empty() {
                        *da = db;
                    } else if !b.is_empty() && *da != db {
                        return Err(Error::DescriptorMismatch(format!(
                            "real descriptors of length {da} and {db}"
                        )));
                    }
                    a.extend(b);
                }
                _ => {
                    return Err(Error::DescriptorMismatch(
                        "binary and real descriptors in one batch".into(),
                    ))
                }
            }
        }
        Ok(acc)
    }
}

/// Keypoints and their descriptors, index aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct Detections {
    keypoints: Vec<Keypoint>,
    descriptors: Descriptors,
}

impl Detections {
    pub fn new(keypoints: Vec<Keypoint>, descriptors: Descriptors) -> Result<Self> {
        if keypoints.len() != descriptors.len() && !(keypoints.is_empty() && descriptors.is_empty()) {
            return Err(Error::DimensionMismatch(format!(
                "{} keypoints, {} descriptors",
                keypoints.len(),
                descriptors.len()
            )));
        }
        Ok(Self {
            keypoints,
            descriptors,
        })
    }

    pub fn empty() -> Self {
        Self {
            keypoints: Vec::new(),
            descriptors: Descriptors::Binary(Vec::new()),
        }
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn descriptors(&self) -> &Descriptors {
        &self.descriptors
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    fn select(&self, order: &[usize]) -> Self {
        Self {
            keypoints: order.iter().map(|&i| self.keypoints[i]).collect(),
            descriptors: self.descriptors.select(order),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    BuiltinFastBrief,
    BuiltinShiTomasiBrief,
    External,
}

/// Detector selection and parameters; the `[features]` config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub fast_threshold: u8,
    pub max_kp: usize,
    pub nms_radius: usize,
    pub command: Option<String>,
    pub timeout_s: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            kind: DetectorKind::BuiltinFastBrief,
            fast_threshold: 20,
            max_kp: 500,
            nms_radius: 4,
            command: None,
            timeout_s: 60.0,
        }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fast_threshold == 0 {
            return Err(Error::Config("features.fast_threshold must be positive".into()));
        }
        if self.max_kp == 0 {
            return Err(Error::Config("features.max_kp must be >= 1".into()));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(Error::Config(format!("features.timeout_s = {}", self.timeout_s)));
        }
        if self.kind == DetectorKind::External
            && self.command.as_deref().is_none_or(|c| c.trim().is_empty())
        {
            return Err(Error::Config("external detector needs features.command".into()));
        }
        Ok(())
    }
}

/// Sorts indices by (score desc, y, x, channel).
fn canonical_order(kps: &[Keypoint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..kps.len()).collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (&kps[a], &kps[b]);
        kb.score
            .total_cmp(&ka.score)
            .then(ka.y.total_cmp(&kb.y))
            .then(ka.x.total_cmp(&kb.x))
            .then(ka.channel.cmp(&kb.channel))
    });
    order
}

/// Greedy suppression: strongest first, each accepted keypoint blocks its
/// `(2r+1)^2` neighbourhood. Input must already be canonically ordered.
fn suppress(candidates: &[(usize, usize, f32)], width: usize, height: usize, radius: usize) -> Vec<usize> {
    if radius == 0 {
        return (0..candidates.len()).collect();
    }
    let mut blocked = vec![false; width * height];
    let mut kept = Vec::new();
    for (i, &(x, y, _)) in candidates.iter().enumerate() {
        if blocked[y * width + x] {
            continue;
        }
        kept.push(i);
        for by in y.saturating_sub(radius)..=(y + radius).min(height - 1) {
            for bx in x.saturating_sub(radius)..=(x + radius).min(width - 1) {
                blocked[by * width + bx] = true;
            }
        }
    }
    kept
}

fn detect_builtin(img: &GrayImage, spec: &DetectorSpec, channel: u8) -> Detections {
    let (w, h) = (img.width(), img.height());
    let mut candidates = match spec.kind {
        DetectorKind::BuiltinShiTomasiBrief => shi_tomasi::shi_tomasi_corners(img, BRIEF_MARGIN),
        _ => fast::fast9_corners(img, spec.fast_threshold, BRIEF_MARGIN),
    };
    candidates.retain(|&(x, y, _)| brief::in_margin(x, y, w, h));
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));
    let kept = suppress(&candidates, w, h, spec.nms_radius);

    let smoothed = brief::Smoothed::new(img);
    let mut keypoints = Vec::new();
    let mut descriptors = Vec::new();
    for &i in kept.iter().take(spec.max_kp) {
        let (x, y, score) = candidates[i];
        let desc = brief::describe(&smoothed, x, y).expect("candidates respect the margin");
        keypoints.push(Keypoint {
            x: x as f32,
            y: y as f32,
            score,
            channel,
        });
        descriptors.push(desc);
    }
    Detections {
        keypoints,
        descriptors: Descriptors::Binary(descriptors),
    }
}

/// Parses `x y score d0 d1 ...` lines from an external detector.
pub fn parse_external_output(text: &str, width: usize, height: usize, channel: u8) -> Result<Detections> {
    let violation = |line: usize, reason: String| Error::External {
        command: "detector".into(),
        reason: format!("line {line}: {reason}"),
    };
    let mut keypoints = Vec::new();
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Vec<f32> = line
            .split_whitespace()
            .map(|t| t.parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| violation(line_no, e.to_string()))?;
        if values.len() < 4 {
            return Err(violation(line_no, "expected `x y score d0 ...`".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(violation(line_no, "non-finite value".into()));
        }
        let d = values.len() - 3;
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(violation(line_no, format!("descriptor length {d}, earlier {prev}")))
            }
            _ => {}
        }
        let (x, y) = (values[0], values[1]);
        if x < 0.0 || y < 0.0 || x > (width - 1) as f32 || y > (height - 1) as f32 {
            return Err(violation(line_no, format!("({x}, {y}) outside {width}x{height}")));
        }
        keypoints.push(Keypoint {
            x,
            y,
            score: values[2],
            channel,
        });
        data.extend_from_slice(&values[3..]);
    }
    Detections::new(
        keypoints,
        Descriptors::Real {
            dim: dim.unwrap_or(0),
            data,
        },
    )
}

fn detect_external(img: &GrayImage, spec: &DetectorSpec, channel: u8) -> Result<Detections> {
    let command = spec.command.as_deref().unwrap_or_default();
    let png = codec::encode_gray_png(img)?;
    let out = run_filter(command, &png, Duration::from_secs_f64(spec.timeout_s))?;
    let text = String::from_utf8(out).map_err(|e| Error::External {
        command: command.to_string(),
        reason: format!("non UTF-8 output: {e}"),
    })?;
    let det = parse_external_output(&text, img.width(), img.height(), channel).map_err(|e| match e {
        Error::External { reason, .. } => Error::External {
            command: command.to_string(),
            reason,
        },
        other => other,
    })?;
    // Per channel cap, strongest first.
    let order: Vec<usize> = canonical_order(det.keypoints())
        .into_iter()
        .take(spec.max_kp)
        .collect();
    Ok(det.select(&order))
}

fn detect_channel(img: &GrayImage, spec: &DetectorSpec, channel: u8) -> Result<Detections> {
    match spec.kind {
        DetectorKind::External => detect_external(img, spec, channel),
        _ => Ok(detect_builtin(img, spec, channel)),
    }
}

/// Detects keypoints on every channel of `variant`, merges them per pixel
/// cell, and returns them in canonical (score desc, y, x) order.
pub fn detect(variant: &ImageVariant, spec: &DetectorSpec) -> Result<Detections> {
    spec.validate()?;
    let per_channel: Vec<Detections> = match variant.image() {
        VariantImage::Gray(g) => vec![detect_channel(g, spec, 0)?],
        VariantImage::Rgb(rgb) => (0..3u8)
            .into_par_iter()
            .map(|c| detect_channel(&rgb.channel(c as usize), spec, c))
            .collect::<Result<Vec<_>>>()?,
    };

    let mut keypoints = Vec::new();
    let mut descs = Vec::new();
    for d in per_channel {
        keypoints.extend(d.keypoints);
        descs.push(d.descriptors);
    }
    let merged = Detections::new(keypoints, Descriptors::concat(descs)?)?;

    let mut seen = HashSet::new();
    let order: Vec<usize> = canonical_order(merged.keypoints())
        .into_iter()
        .filter(|&i| seen.insert(merged.keypoints()[i].cell()))
        .collect();
    Ok(merged.select(&order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{RgbImage, VariantKind};

    fn gray_variant(img: GrayImage) -> ImageVariant {
        let (w, h) = (img.width(), img.height());
        ImageVariant::new(VariantKind::Sig, VariantImage::Gray(img), w, h).unwrap()
    }

    fn rgb_variant(img: RgbImage) -> ImageVariant {
        let (w, h) = (img.width(), img.height());
        ImageVariant::new(VariantKind::SigC, VariantImage::Rgb(img), w, h).unwrap()
    }

    fn square() -> GrayImage {
        GrayImage::from_fn(64, 64, |x, y| {
            if (20..44).contains(&x) && (20..44).contains(&y) {
                255
            } else {
                0
            }
        })
    }

    /// Textured test image with plenty of corners.
    fn blocks(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let cell = (x / 6) * 7919 + (y / 6) * 104729;
            ((cell * 2654435761usize) >> 7) as u8
        })
    }

    #[test]
    fn constant_image_yields_nothing() {
        let det = detect(&gray_variant(GrayImage::filled(64, 64, 90)), &DetectorSpec::default()).unwrap();
        assert!(det.is_empty());
    }

    #[test]
    fn square_corners_found() {
        let img = square();
        let spec = DetectorSpec::default();
        let det = detect(&gray_variant(img.clone()), &spec).unwrap();
        // Brute force segment test over every pixel inside the margin.
        let mut oracle = Vec::new();
        for y in BRIEF_MARGIN..=64 - BRIEF_MARGIN {
            for x in BRIEF_MARGIN..=64 - BRIEF_MARGIN {
                if fast::fast9_score(&img, x, y, spec.fast_threshold).is_some() {
                    oracle.push((x, y));
                }
            }
        }
        assert!(!oracle.is_empty());
        for kp in det.keypoints() {
            assert!(oracle.contains(&(kp.x as usize, kp.y as usize)));
        }
        // One detection near each of the four corners.
        for (cx, cy) in [(20.0, 20.0), (43.0, 20.0), (20.0, 43.0), (43.0, 43.0)] {
            assert!(
                det.keypoints()
                    .iter()
                    .any(|k| (k.x - cx).abs() <= 2.0 && (k.y - cy).abs() <= 2.0),
                "no keypoint near ({cx}, {cy}): {:?}",
                det.keypoints()
            );
        }
        assert_eq!(det.len(), 4);
    }

    #[test]
    fn replicated_rgb_equals_gray_detection() {
        let img = blocks(96, 80);
        let spec = DetectorSpec::default();
        let gray = detect(&gray_variant(img.clone()), &spec).unwrap();
        let rgb = detect(&rgb_variant(RgbImage::from_gray(&img)), &spec).unwrap();
        assert!(!gray.is_empty());
        assert_eq!(gray, rgb);
    }

    #[test]
    fn invariants_hold_on_textured_image() {
        let img = blocks(128, 96);
        let spec = DetectorSpec {
            max_kp: 40,
            ..Default::default()
        };
        let det = detect(&gray_variant(img.clone()), &spec).unwrap();
        assert!(det.len() <= 40);
        let kps = det.keypoints();
        for w in kps.windows(2) {
            assert!(
                w[0].score > w[1].score
                    || (w[0].score == w[1].score && (w[0].y, w[0].x) < (w[1].y, w[1].x))
            );
        }
        let cells: HashSet<_> = kps.iter().map(|k| k.cell()).collect();
        assert_eq!(cells.len(), kps.len());
        for k in kps {
            assert!(brief::in_margin(k.x as usize, k.y as usize, 128, 96));
        }
        // Suppression radius respected.
        for (i, a) in kps.iter().enumerate() {
            for b in &kps[i + 1..] {
                assert!((a.x - b.x).abs() > 4.0 || (a.y - b.y).abs() > 4.0);
            }
        }
        assert_eq!(det, detect(&gray_variant(img), &spec).unwrap());
    }

    #[test]
    fn rgb_channels_detect_independently() {
        // Red carries one square, blue another; both must be found.
        let w = 96;
        let h = 64;
        let mut data = vec![0u8; 3 * w * h];
        for y in 20..44 {
            for x in 20..40 {
                data[3 * (y * w + x)] = 255;
            }
            for x in 56..76 {
                data[3 * (y * w + x) + 2] = 255;
            }
        }
        let det = detect(&rgb_variant(RgbImage::new(w, h, data).unwrap()), &DetectorSpec::default()).unwrap();
        assert!(det.keypoints().iter().any(|k| k.channel == 0));
        assert!(det.keypoints().iter().any(|k| k.channel == 2));
        assert!(det.keypoints().iter().all(|k| k.channel != 1));
    }

    #[test]
    fn shi_tomasi_kind_runs() {
        let spec = DetectorSpec {
            kind: DetectorKind::BuiltinShiTomasiBrief,
            ..Default::default()
        };
        let det = detect(&gray_variant(square()), &spec).unwrap();
        assert!(!det.is_empty());
        assert!(matches!(det.descriptors(), Descriptors::Binary(_)));
    }

    #[test]
    fn external_protocol_parsing() {
        let det = parse_external_output("# comment\n1 2 0.5 0.1 0.2\n3.5 4 0.9 1 2\n", 10, 10, 1).unwrap();
        assert_eq!(det.len(), 2);
        assert_eq!(det.descriptors().real(1).unwrap(), &[1.0, 2.0]);
        assert_eq!(det.keypoints()[0].channel, 1);

        assert!(parse_external_output("1 2 0.5 0.1\n1 2 0.5 0.1 0.2\n", 10, 10, 0).is_err());
        assert!(parse_external_output("1 2\n", 10, 10, 0).is_err());
        assert!(parse_external_output("11 2 1 1\n", 10, 10, 0).is_err());
        assert!(parse_external_output("a 2 1 1\n", 10, 10, 0).is_err());
        assert!(parse_external_output("", 10, 10, 0).unwrap().is_empty());
    }

    #[test]
    fn external_detector_round_trip() {
        let spec = DetectorSpec {
            kind: DetectorKind::External,
            command: Some("cat >/dev/null; printf '5 6 0.5 1 0 0\\n5 6 0.7 0 1 0\\n9 9 0.1 0 0 1\\n'".into()),
            ..Default::default()
        };
        let det = detect(&gray_variant(GrayImage::filled(16, 16, 0)), &spec).unwrap();
        // Duplicate cell (5, 6) keeps the stronger keypoint.
        assert_eq!(det.len(), 2);
        assert_eq!(det.keypoints()[0].score, 0.7);
        assert_eq!(det.descriptors().real(0).unwrap(), &[0.0, 1.0, 0.0]);

        let broken = DetectorSpec {
            command: Some("cat >/dev/null; echo '1 1'".into()),
            ..spec.clone()
        };
        assert!(detect(&gray_variant(GrayImage::filled(16, 16, 0)), &broken).is_err());
        let missing = DetectorSpec {
            command: None,
            ..spec
        };
        assert!(missing.validate().is_err());
    }
}
