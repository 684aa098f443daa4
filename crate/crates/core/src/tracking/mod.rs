//! Keypoint tracking between consecutive frames and keypoint-to-point
//! sampling.
//!
//! Each variant stream is tracked on its own: current detections are
//! matched against the previous frame's detections of the same kind, and
//! only mutually matched keypoints survive. Survivors are mapped back to
//! source pixels, then to point indices; a combination's sampled cloud is
//! the union of those indices over its variants.

mod mnn;

use std::collections::{BTreeSet, HashMap};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Detections;
use crate::types::{pixel_to_point_index, variant_to_source_pixel, ImageVariant, LidarFrame, VariantKind};

pub use mnn::mnn_match;

/// A named list of image variants sampled together.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Combination {
    pub name: &'static str,
    pub variants: &'static [VariantKind],
}

impl Combination {
    pub fn kinds(&self) -> BTreeSet<VariantKind> {
        self.variants.iter().copied().collect()
    }
}

use VariantKind::{Rng, Rng2r, Sig, Sig2r, Sig2rC, SigC};

static COMBINATIONS: [Combination; 7] = [
    Combination {
        name: "comb_0",
        variants: &[Rng, Sig, Sig2r],
    },
    Combination {
        name: "comb_1",
        variants: &[Rng, Sig, SigC],
    },
    Combination {
        name: "comb_2",
        variants: &[Rng, Sig, Sig2rC],
    },
    Combination {
        name: "comb_3",
        variants: &[Rng, Sig, SigC, Sig2r, Sig2rC],
    },
    Combination {
        name: "comb_4",
        variants: &[Rng, Rng2r, Sig, SigC, Sig2r, Sig2rC],
    },
    Combination {
        name: "comb_5",
        variants: &[Rng, Rng2r, Sig2r, Sig2rC],
    },
    Combination {
        name: "comb_6",
        variants: &[Rng, Rng2r, Sig, Sig2rC],
    },
];

pub fn builtin_combinations() -> &'static [Combination] {
    &COMBINATIONS
}

pub fn find_combination(name: &str) -> Result<&'static Combination> {
    COMBINATIONS
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::UnknownCombination(name.to_string()))
}

/// `[tracking]` config section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    /// Optional ceiling on descriptor distance for a match; off by default.
    pub max_distance: Option<f64>,
}

/// Previous frame's detections, one slot per variant kind.
#[derive(Clone, Debug, Default)]
pub struct TrackState {
    previous: HashMap<VariantKind, Detections>,
}

impl TrackState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.previous.clear();
    }

    pub fn has(&self, kind: VariantKind) -> bool {
        self.previous.contains_key(&kind)
    }

    /// Returns the indices of `current` keypoints that survive tracking and
    /// stores `current` for the next frame. The first frame of a kind has
    /// nothing to match against, so every detection passes.
    pub fn track(
        &mut self,
        kind: VariantKind,
        current: &Detections,
        max_distance: Option<f64>,
    ) -> Result<Vec<usize>> {
        let matched = match self.previous.get(&kind) {
            None => (0..current.len()).collect(),
            Some(prev) => {
                let mut idx: Vec<usize> =
                    mnn_match(prev.descriptors(), current.descriptors(), max_distance)?
                        .into_iter()
                        .map(|(_, j)| j)
                        .collect();
                idx.sort_unstable();
                idx
            }
        };
        self.previous.insert(kind, current.clone());
        Ok(matched)
    }
}

/// Point subset selected for registration.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledCloud {
    /// Strictly increasing, valid point indices.
    pub indices: Vec<usize>,
    pub points: Vec<Point3<f64>>,
    /// Surviving keypoints per variant, in combination order.
    pub per_variant: Vec<(VariantKind, usize)>,
}

impl SampledCloud {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Every valid point of the frame; the full-cloud baseline.
    pub fn full(frame: &LidarFrame) -> Self {
        let indices: Vec<usize> = (0..frame.cloud.len())
            .filter(|&i| frame.cloud.is_valid(i))
            .collect();
        let points = indices.iter().map(|&i| frame.cloud.point(i)).collect();
        Self {
            indices,
            points,
            per_variant: Vec::new(),
        }
    }
}

/// Maps keypoints of one variant to valid point indices of the frame.
pub fn keypoints_to_indices(
    frame: &LidarFrame,
    variant: &ImageVariant,
    detections: &Detections,
    selected: &[usize],
) -> Result<BTreeSet<usize>> {
    let (vw, vh) = (variant.image().width(), variant.image().height());
    let mut out = BTreeSet::new();
    for &i in selected {
        let kp = detections.keypoints()[i];
        let (row, col) = variant_to_source_pixel(kp.x as f64, kp.y as f64, variant.scale(), vw, vh)?;
        let index = pixel_to_point_index(row, col, frame.width(), frame.height())?;
        if frame.cloud.is_valid(index) {
            out.insert(index);
        }
    }
    Ok(out)
}

/// Tracks each variant of `combination` and unions the resulting point
/// indices. `variants` and `detections` are index aligned.
pub fn sample(
    frame: &LidarFrame,
    combination: &Combination,
    variants: &[ImageVariant],
    detections: &[Detections],
    state: &mut TrackState,
    cfg: &TrackingConfig,
) -> Result<SampledCloud> {
    if variants.len() != detections.len() {
        return Err(Error::InvalidArgument(format!(
            "{} variants but {} detection sets",
            variants.len(),
            detections.len()
        )));
    }
    let mut union = BTreeSet::new();
    let mut per_variant = Vec::with_capacity(combination.variants.len());
    for &kind in combination.variants {
        let pos = variants
            .iter()
            .position(|v| v.kind() == kind)
            .ok_or_else(|| Error::InvalidArgument(format!("variant {kind} was not built")))?;
        let matched = state.track(kind, &detections[pos], cfg.max_distance)?;
        per_variant.push((kind, matched.len()));
        union.extend(keypoints_to_indices(frame, &variants[pos], &detections[pos], &matched)?);
    }
    let indices: Vec<usize> = union.into_iter().collect();
    let points = indices.iter().map(|&i| frame.cloud.point(i)).collect();
    Ok(SampledCloud {
        indices,
        points,
        per_variant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Descriptors, Keypoint};
    use crate::types::{Gray16Image, GrayImage, VariantImage};

    #[test]
    fn combination_lookup() {
        assert_eq!(find_combination("comb_2").unwrap().variants, &[Rng, Sig, Sig2rC]);
        assert_eq!(find_combination("comb_4").unwrap().variants.len(), 6);
        assert!(matches!(find_combination("comb_7"), Err(Error::UnknownCombination(_))));
    }

    fn dets(bits: &[u64], coords: &[(f32, f32)]) -> Detections {
        let kps = coords
            .iter()
            .map(|&(x, y)| Keypoint {
                x,
                y,
                score: 1.0,
                channel: 0,
            })
            .collect();
        Detections::new(kps, Descriptors::Binary(bits.iter().map(|&b| [b, 0, 0, 0]).collect())).unwrap()
    }

    #[test]
    fn bootstrap_then_match() {
        let mut state = TrackState::new();
        let coords: Vec<_> = (0..10).map(|i| (i as f32, 0.0)).collect();
        let bits: Vec<u64> = (0..10).map(|i| 1u64 << (i * 6)).collect();
        let first = dets(&bits, &coords);
        assert_eq!(state.track(Sig, &first, None).unwrap().len(), 10);
        assert_eq!(state.track(Sig, &first, None).unwrap(), (0..10).collect::<Vec<_>>());
        // Other kinds bootstrap separately.
        assert_eq!(state.track(Rng, &dets(&[1], &[(0.0, 0.0)]), None).unwrap(), vec![0]);
        state.reset();
        assert!(!state.has(Sig));
    }

    #[test]
    fn disjoint_descriptors_with_ceiling_match_nothing() {
        let mut state = TrackState::new();
        state.track(Sig, &dets(&[0, 0], &[(0.0, 0.0), (1.0, 0.0)]), None).unwrap();
        let far = dets(&[u64::MAX, u64::MAX << 1], &[(0.0, 0.0), (1.0, 0.0)]);
        assert!(state.track(Sig, &far, Some(10.0)).unwrap().is_empty());
    }

    fn frame(w: usize, h: usize, zero_range: &[usize]) -> LidarFrame {
        let mut range = vec![100u16; w * h];
        for &i in zero_range {
            range[i] = 0;
        }
        let points = (0..w * h)
            .map(|i| if range[i] == 0 { [0.0; 3] } else { [i as f32, 1.0, 2.0] })
            .collect();
        LidarFrame::new(
            0.0,
            Gray16Image::new(w, h, range).unwrap(),
            Gray16Image::new(w, h, vec![1; w * h]).unwrap(),
            points,
        )
        .unwrap()
    }

    #[test]
    fn union_across_variants_and_validity() {
        let f = frame(4, 2, &[5]);
        let sig = ImageVariant::new(Sig, VariantImage::Gray(GrayImage::filled(4, 2, 0)), 4, 2).unwrap();
        let rng = ImageVariant::new(Rng, VariantImage::Gray(GrayImage::filled(4, 2, 0)), 4, 2).unwrap();
        let sig2r =
            ImageVariant::new(Sig2r, VariantImage::Gray(GrayImage::filled(8, 4, 0)), 4, 2).unwrap();
        // rng -> {1, 2}; sig -> {2, 3} plus a zero-range pixel 5;
        // sig_2r (7, 3) -> source (1, 3) -> 7.
        let d_rng = dets(&[1, 2], &[(1.0, 0.0), (2.0, 0.0)]);
        let d_sig = dets(&[1, 2, 4], &[(2.0, 0.0), (3.0, 0.0), (1.0, 1.0)]);
        let d_sig2r = dets(&[1], &[(7.0, 3.0)]);
        let comb = find_combination("comb_0").unwrap();
        let mut state = TrackState::new();
        let out = sample(
            &f,
            comb,
            &[rng, sig, sig2r],
            &[d_rng, d_sig, d_sig2r],
            &mut state,
            &TrackingConfig::default(),
        )
        .unwrap();
        assert_eq!(out.indices, vec![1, 2, 3, 7]);
        assert_eq!(out.points[0], Point3::new(1.0, 1.0, 2.0));
        assert_eq!(out.per_variant, vec![(Rng, 2), (Sig, 3), (Sig2r, 1)]);
    }

    #[test]
    fn missing_variant_is_an_error() {
        let f = frame(4, 2, &[]);
        let rng = ImageVariant::new(Rng, VariantImage::Gray(GrayImage::filled(4, 2, 0)), 4, 2).unwrap();
        let comb = find_combination("comb_0").unwrap();
        let err = sample(
            &f,
            comb,
            &[rng],
            &[Detections::empty()],
            &mut TrackState::new(),
            &TrackingConfig::default(),
        );
        assert!(err.is_err());
    }
}
