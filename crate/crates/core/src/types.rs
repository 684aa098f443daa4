//! Domain types shared by every stage: images, clouds, frames, poses.
//!
//! Pixel `(row, col)` of a frame's images corresponds to point index
//! `row * width + col` of its cloud. Images are assumed destaggered.

use std::fmt;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single channel 8-bit image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y)
        })
    }
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

/// Single channel 16-bit image as stored on disk.
#[derive(Clone, PartialEq, Eq)]
pub struct Gray16Image {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl Gray16Image {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }
}

impl fmt::Debug for Gray16Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gray16Image({}x{})", self.width, self.height)
    }
}

/// Interleaved RGB 8-bit image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} rgb image needs {} bytes, got {}",
                width,
                height,
                3 * width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_gray(gray: &GrayImage) -> Self {
        let data = gray.data().iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width: gray.width(),
            height: gray.height(),
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Extracts one channel (0 = R, 1 = G, 2 = B) as a gray image.
    pub fn channel(&self, channel: usize) -> GrayImage {
        assert!(channel < 3, "rgb channel index {channel}");
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(channel).step_by(3).copied().collect(),
        }
    }
}

impl fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RgbImage({}x{})", self.width, self.height)
    }
}

/// One sweep's points in the sensor frame, row-major in pixel order.
///
/// A point is invalid exactly when its pixel has zero range; invalid points
/// are stored as the origin so the cloud length stays `H * W`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<[f32; 3]>,
    valid: Vec<bool>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>, valid: Vec<bool>) -> Result<Self> {
        if points.len() != valid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} validity flags",
                points.len(),
                valid.len()
            )));
        }
        Ok(Self { points, valid })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    #[inline]
    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn is_valid(&self, index: usize) -> bool {
        self.valid[index]
    }

    pub fn point(&self, index: usize) -> Point3<f64> {
        let [x, y, z] = self.points[index];
        Point3::new(x as f64, y as f64, z as f64)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// All valid points, in index order.
    pub fn valid_points(&self) -> Vec<Point3<f64>> {
        (0..self.len())
            .filter(|&i| self.valid[i])
            .map(|i| self.point(i))
            .collect()
    }
}

/// One lidar sweep: raw 16-bit range and signal images plus the cloud.
#[derive(Clone, Debug)]
pub struct LidarFrame {
    pub timestamp: f64,
    pub range: Gray16Image,
    pub signal: Gray16Image,
    pub cloud: PointCloud,
}

impl LidarFrame {
    /// Builds a frame, deriving point validity from the range image.
    pub fn new(
        timestamp: f64,
        range: Gray16Image,
        signal: Gray16Image,
        points: Vec<[f32; 3]>,
    ) -> Result<Self> {
        if range.width() != signal.width() || range.height() != signal.height() {
            return Err(Error::DimensionMismatch(format!(
                "range {}x{} vs signal {}x{}",
                range.width(),
                range.height(),
                signal.width(),
                signal.height()
            )));
        }
        let expected = range.width() * range.height();
        if points.len() != expected {
            return Err(Error::Consistency(format!(
                "cloud has {} points, images need {}",
                points.len(),
                expected
            )));
        }
        let valid = range.data().iter().map(|&r| r != 0).collect();
        Ok(Self {
            timestamp,
            range,
            signal,
            cloud: PointCloud { points, valid },
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.range.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.range.height()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Rng,
    Sig,
    Rng2r,
    Sig2r,
    SigC,
    Sig2rC,
}

impl VariantKind {
    pub const ALL: [VariantKind; 6] = [
        VariantKind::Rng,
        VariantKind::Sig,
        VariantKind::Rng2r,
        VariantKind::Sig2r,
        VariantKind::SigC,
        VariantKind::Sig2rC,
    ];

    /// Upsampling factor relative to the source frame.
    pub fn scale(self) -> usize {
        match self {
            VariantKind::Rng | VariantKind::Sig | VariantKind::SigC => 1,
            VariantKind::Rng2r | VariantKind::Sig2r | VariantKind::Sig2rC => 2,
        }
    }

    pub fn channels(self) -> usize {
        match self {
            VariantKind::SigC | VariantKind::Sig2rC => 3,
            _ => 1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Rng => "rng",
            VariantKind::Sig => "sig",
            VariantKind::Rng2r => "rng_2r",
            VariantKind::Sig2r => "sig_2r",
            VariantKind::SigC => "sig_c",
            VariantKind::Sig2rC => "sig_2r_c",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant kind `{name}`")))
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VariantImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl VariantImage {
    pub fn width(&self) -> usize {
        match self {
            VariantImage::Gray(g) => g.width(),
            VariantImage::Rgb(c) => c.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            VariantImage::Gray(g) => g.height(),
            VariantImage::Rgb(c) => c.height(),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            VariantImage::Gray(_) => 1,
            VariantImage::Rgb(_) => 3,
        }
    }
}

/// A named enhanced image derived from one source frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageVariant {
    kind: VariantKind,
    image: VariantImage,
}

impl ImageVariant {
    /// Checks that the image's channel count and dimensions agree with
    /// what `kind` demands for a `source_width x source_height` frame.
    pub fn new(
        kind: VariantKind,
        image: VariantImage,
        source_width: usize,
        source_height: usize,
    ) -> Result<Self> {
        if image.channels() != kind.channels() {
            return Err(Error::DimensionMismatch(format!(
                "{kind} needs {} channels, got {}",
                kind.channels(),
                image.channels()
            )));
        }
        let (w, h) = (source_width * kind.scale(), source_height * kind.scale());
        if image.width() != w || image.height() != h {
            return Err(Error::DimensionMismatch(format!(
                "{kind} needs {w}x{h}, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        Ok(Self { kind, image })
    }

    #[inline]
    pub fn kind(&self) -> VariantKind {
        self.kind
    }

    #[inline]
    pub fn scale(&self) -> usize {
        self.kind.scale()
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.kind.channels()
    }

    #[inline]
    pub fn image(&self) -> &VariantImage {
        &self.image
    }
}

/// Timestamped rigid body transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub timestamp: f64,
    pub isometry: Isometry3<f64>,
}

impl Pose {
    pub fn new(timestamp: f64, isometry: Isometry3<f64>) -> Self {
        Self {
            timestamp,
            isometry,
        }
    }

    pub fn identity(timestamp: f64) -> Self {
        Self::new(timestamp, Isometry3::identity())
    }

    pub fn from_parts(timestamp: f64, translation: [f64; 3], rotation: UnitQuaternion<f64>) -> Self {
        Self::new(
            timestamp,
            Isometry3::from_parts(
                Translation3::new(translation[0], translation[1], translation[2]),
                rotation,
            ),
        )
    }

    pub fn translation(&self) -> nalgebra::Vector3<f64> {
        self.isometry.translation.vector
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.isometry.rotation
    }
}

/// Poses in strictly increasing timestamp order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if let Some(w) = poses.windows(2).find(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::InvalidArgument(format!(
                "timestamps not strictly increasing: {} then {}",
                w[0].timestamp, w[1].timestamp
            )));
        }
        Ok(Self { poses })
    }

    #[inline]
    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Sum of distances between consecutive positions.
    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].translation() - w[0].translation()).norm())
            .sum()
    }

    /// Re-expresses every pose relative to the first one.
    pub fn relative_to_first(&self) -> Self {
        let Some(first) = self.poses.first() else {
            return self.clone();
        };
        let inv = first.isometry.inverse();
        Self {
            poses: self
                .poses
                .iter()
                .map(|p| Pose::new(p.timestamp, inv * p.isometry))
                .collect(),
        }
    }
}

/// Maps pixel `(row, col)` to its point index in a row-major cloud.
pub fn pixel_to_point_index(row: usize, col: usize, width: usize, height: usize) -> Result<usize> {
    if row >= height || col >= width {
        return Err(Error::OutOfBounds {
            what: "pixel",
            detail: format!("({row}, {col}) in {height}x{width}"),
        });
    }
    Ok(row * width + col)
}

/// Maps a keypoint at `(x, y)` in a variant image back to the source
/// pixel `(row, col)` by floor division with the variant's scale.
pub fn variant_to_source_pixel(
    x: f64,
    y: f64,
    scale: usize,
    variant_width: usize,
    variant_height: usize,
) -> Result<(usize, usize)> {
    if scale != 1 && scale != 2 {
        return Err(Error::InvalidArgument(format!("variant scale {scale}")));
    }
    if !(x >= 0.0 && y >= 0.0 && x < variant_width as f64 && y < variant_height as f64) {
        return Err(Error::OutOfBounds {
            what: "variant coordinate",
            detail: format!("({x}, {y}) in {variant_width}x{variant_height}"),
        });
    }
    let s = scale as f64;
    Ok(((y / s).floor() as usize, (x / s).floor() as usize))
}

/// Linearly rescales a 16-bit image so that its `percentile` order
/// statistic maps to 255; values above it saturate.
pub fn normalize_intensity(raw: &Gray16Image, percentile: f64) -> Result<GrayImage> {
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile {percentile} outside (0, 1]"
        )));
    }
    if raw.data().is_empty() {
        return Err(Error::InvalidArgument("empty image".into()));
    }
    let reference = percentile_value(raw.data(), percentile);
    let data = if reference == 0 {
        vec![0; raw.data().len()]
    } else {
        let scale = 255.0 / reference as f64;
        raw.data()
            .iter()
            .map(|&v| (v as f64 * scale).round().min(255.0) as u8)
            .collect()
    };
    GrayImage::new(raw.width(), raw.height(), data)
}

fn percentile_value(data: &[u16], percentile: f64) -> u16 {
    let n = data.len();
    let k = ((percentile * n as f64).ceil() as usize).clamp(1, n) - 1;
    let mut scratch = data.to_vec();
    *scratch.select_nth_unstable(k).1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_index_examples() {
        assert_eq!(pixel_to_point_index(0, 0, 1024, 64).unwrap(), 0);
        assert_eq!(pixel_to_point_index(2, 3, 1024, 64).unwrap(), 2051);
        assert_eq!(pixel_to_point_index(63, 1023, 1024, 64).unwrap(), 65535);
        assert!(pixel_to_point_index(64, 0, 1024, 64).is_err());
        assert!(pixel_to_point_index(0, 1024, 1024, 64).is_err());
    }

    #[test]
    fn source_pixel_examples() {
        assert_eq!(variant_to_source_pixel(7.0, 5.0, 2, 16, 16).unwrap(), (2, 3));
        assert_eq!(variant_to_source_pixel(4.0, 4.0, 1, 8, 8).unwrap(), (4, 4));
        assert_eq!(variant_to_source_pixel(0.0, 1.0, 2, 8, 8).unwrap(), (0, 0));
        assert!(variant_to_source_pixel(8.0, 0.0, 1, 8, 8).is_err());
        assert!(variant_to_source_pixel(0.0, 0.0, 3, 8, 8).is_err());
    }

    #[test]
    fn scale_two_maps_blocks_to_one_pixel() {
        let (w, h) = (6usize, 4usize);
        for r in 0..h {
            for c in 0..w {
                for dy in 0..2 {
                    for dx in 0..2 {
                        let got = variant_to_source_pixel(
                            (2 * c + dx) as f64,
                            (2 * r + dy) as f64,
                            2,
                            2 * w,
                            2 * h,
                        )
                        .unwrap();
                        assert_eq!(got, (r, c));
                    }
                }
            }
        }
    }

    #[test]
    fn index_is_bijection() {
        let (w, h) = (17, 5);
        let mut seen = vec![false; w * h];
        for r in 0..h {
            for c in 0..w {
                let (sr, sc) = variant_to_source_pixel(c as f64, r as f64, 1, w, h).unwrap();
                assert_eq!((sr, sc), (r, c));
                let i = pixel_to_point_index(r, c, w, h).unwrap();
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn normalize_examples() {
        let zeros = Gray16Image::new(4, 4, vec![0; 16]).unwrap();
        assert!(normalize_intensity(&zeros, 0.99)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0));

        let constant = Gray16Image::new(4, 4, vec![1000; 16]).unwrap();
        assert!(normalize_intensity(&constant, 1.0)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 255));

        let ramp = Gray16Image::new(256, 256, (0..=65535u16).collect()).unwrap();
        let out = normalize_intensity(&ramp, 1.0).unwrap();
        for (raw, &v) in ramp.data().iter().zip(out.data()) {
            let expected = *raw as f64 * 255.0 / 65535.0;
            assert!((v as f64 - expected).abs() <= 1.0, "{raw} -> {v}");
        }

        assert!(normalize_intensity(&Gray16Image::new(0, 0, vec![]).unwrap(), 0.5).is_err());
        assert!(normalize_intensity(&constant, 0.0).is_err());
    }

    #[test]
    fn percentile_resists_hot_pixels() {
        let mut data = vec![100u16; 1000];
        data[0] = 60000;
        let img = Gray16Image::new(100, 10, data).unwrap();
        let out = normalize_intensity(&img, 0.99).unwrap();
        assert_eq!(out.get(1, 0), 255);
        assert_eq!(out.get(0, 0), 255);
    }

    #[test]
    fn frame_validity_tracks_zero_range() {
        let range = Gray16Image::new(3, 1, vec![0, 5, 0]).unwrap();
        let signal = Gray16Image::new(3, 1, vec![1, 2, 3]).unwrap();
        let frame =
            LidarFrame::new(0.0, range, signal, vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0; 3]])
                .unwrap();
        assert_eq!(frame.cloud.validity(), &[false, true, false]);

        let range = Gray16Image::new(3, 1, vec![0, 5, 0]).unwrap();
        let signal = Gray16Image::new(3, 1, vec![1, 2, 3]).unwrap();
        assert!(matches!(
            LidarFrame::new(0.0, range, signal, vec![[0.0; 3]; 2]),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn variant_table() {
        use VariantKind::*;
        let table = [
            (Rng, 1, 1),
            (Sig, 1, 1),
            (Rng2r, 2, 1),
            (Sig2r, 2, 1),
            (SigC, 1, 3),
            (Sig2rC, 2, 3),
        ];
        for (kind, scale, channels) in table {
            assert_eq!(kind.scale(), scale);
            assert_eq!(kind.channels(), channels);
            assert_eq!(VariantKind::parse(kind.name()).unwrap(), kind);
        }
        let bad = ImageVariant::new(Sig2r, VariantImage::Gray(GrayImage::filled(4, 4, 0)), 4, 4);
        assert!(bad.is_err());
    }
}
