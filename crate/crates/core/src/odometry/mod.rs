//! Scan-to-map ICP odometry in the KISS-ICP style: constant velocity
//! prediction, voxel-capped local map, point-to-point Gauss-Newton with a
//! Geman-McClure kernel and an adaptive correspondence threshold.
//!
//! The scan is registered exactly as given; no voxel downsampling happens
//! here, since point selection is the sampler's job.

mod registration;
mod voxel_map;

use nalgebra::{Isometry3, Point3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use registration::{
    apply_increment, geman_mcclure, geman_mcclure_weight, gn_jacobian, register, skew, Registration,
    RegistrationParams,
};
pub use voxel_map::VoxelMap;

/// `[odometry]` config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdometryConfig {
    pub voxel_size: f64,
    pub max_points_per_voxel: usize,
    pub map_range: f64,
    pub initial_threshold: f64,
    pub min_motion_threshold: f64,
    pub max_iterations: usize,
    pub convergence_epsilon: f64,
    pub min_correspondences: usize,
    /// Correspondence distance = factor * adaptive threshold.
    pub correspondence_factor: f64,
    /// Kernel scale = factor * adaptive threshold.
    pub kernel_factor: f64,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        Self {
            voxel_size: 1.0,
            max_points_per_voxel: 20,
            map_range: 100.0,
            initial_threshold: 2.0,
            min_motion_threshold: 0.1,
            max_iterations: 50,
            convergence_epsilon: 1e-4,
            min_correspondences: 10,
            correspondence_factor: 3.0,
            kernel_factor: 1.0 / 3.0,
        }
    }
}

impl OdometryConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("voxel_size", self.voxel_size),
            ("map_range", self.map_range),
            ("initial_threshold", self.initial_threshold),
            ("min_motion_threshold", self.min_motion_threshold),
            ("convergence_epsilon", self.convergence_epsilon),
            ("correspondence_factor", self.correspondence_factor),
            ("kernel_factor", self.kernel_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("odometry.{name} = {v}")));
            }
        }
        if self.max_points_per_voxel == 0 || self.max_iterations == 0 {
            return Err(Error::Config(
                "odometry.max_points_per_voxel and max_iterations must be >= 1".into(),
            ));
        }
        if self.convergence_epsilon >= self.initial_threshold {
            return Err(Error::Config(
                "odometry.convergence_epsilon must be below initial_threshold".into(),
            ));
        }
        Ok(())
    }

    pub fn params(&self, threshold: f64) -> RegistrationParams {
        RegistrationParams {
            max_correspondence_distance: self.correspondence_factor * threshold,
            kernel_scale: self.kernel_factor * threshold,
            max_iterations: self.max_iterations,
            convergence_epsilon: self.convergence_epsilon,
            min_correspondences: self.min_correspondences,
        }
    }

    pub fn new_map(&self) -> VoxelMap {
        VoxelMap::new(self.voxel_size, self.max_points_per_voxel, self.map_range)
    }
}

/// Correspondence threshold learned from how far registration moves the
/// pose away from the motion model's prediction.
#[derive(Clone, Debug)]
pub struct AdaptiveThreshold {
    initial: f64,
    min_motion: f64,
    max_range: f64,
    sum_sq: f64,
    samples: usize,
}

impl AdaptiveThreshold {
    pub fn new(initial: f64, min_motion: f64, max_range: f64) -> Self {
        Self {
            initial,
            min_motion,
            max_range,
            sum_sq: 0.0,
            samples: 0,
        }
    }

    /// Translation plus the chord a rotation sweeps at the map range.
    pub fn model_error(deviation: &Isometry3<f64>, max_range: f64) -> f64 {
        let theta = deviation.rotation.angle();
        deviation.translation.vector.norm() + 2.0 * max_range * (theta / 2.0).sin()
    }

    pub fn update(&mut self, deviation: &Isometry3<f64>) {
        let err = Self::model_error(deviation, self.max_range);
        if err > self.min_motion {
            self.sum_sq += err * err;
            self.samples += 1;
        }
    }

    pub fn threshold(&self) -> f64 {
        if self.samples == 0 {
            self.initial
        } else {
            (self.sum_sq / self.samples as f64).sqrt().max(self.min_motion)
        }
    }
}

/// Constant velocity extrapolation from the last two poses.
pub fn predict(poses: &[Isometry3<f64>]) -> Isometry3<f64> {
    match poses {
        [] => Isometry3::identity(),
        [only] => *only,
        [.., prev, last] => last * (prev.inverse() * last),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOdometry {
    pub pose: Isometry3<f64>,
    pub prediction: Isometry3<f64>,
    pub iterations: usize,
    pub correspondences: usize,
    pub threshold: f64,
    /// Registration failed and the prediction was used instead.
    pub degenerate: bool,
}

/// Sequential odometry over a stream of scans.
#[derive(Clone, Debug)]
pub struct Odometry {
    cfg: OdometryConfig,
    map: VoxelMap,
    threshold: AdaptiveThreshold,
    poses: Vec<Isometry3<f64>>,
}

impl Odometry {
    pub fn new(cfg: OdometryConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            map: cfg.new_map(),
            threshold: AdaptiveThreshold::new(cfg.initial_threshold, cfg.min_motion_threshold, cfg.map_range),
            cfg,
            poses: Vec::new(),
        })
    }

    pub fn poses(&self) -> &[Isometry3<f64>] {
        &self.poses
    }

    pub fn map(&self) -> &VoxelMap {
        &self.map
    }

    /// Registers one sensor-frame scan and folds it into the map.
    pub fn process(&mut self, scan: &[Point3<f64>]) -> Result<FrameOdometry> {
        let prediction = predict(&self.poses);
        let threshold = self.threshold.threshold();

        let (pose, iterations, correspondences, degenerate) = if self.map.is_empty() {
            (prediction, 0, 0, !self.poses.is_empty())
        } else if scan.is_empty() {
            (prediction, 0, 0, true)
        } else {
            match register(scan, &self.map, &prediction, &self.cfg.params(threshold)) {
                Ok(reg) => (reg.pose, reg.iterations, reg.correspondences, false),
                Err(Error::Degenerate(_)) => (prediction, 0, 0, true),
                Err(e) => return Err(e),
            }
        };

        self.threshold.update(&(prediction.inverse() * pose));
        self.map.insert(scan, &pose);
        self.poses.push(pose);
        Ok(FrameOdometry {
            pose,
            prediction,
            iterations,
            correspondences,
            threshold,
            degenerate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Translation3, UnitQuaternion, Vector3};

    #[test]
    fn constant_velocity_prediction() {
        let a = Isometry3::translation(1.0, 0.0, 0.0);
        let b = Isometry3::from_parts(
            Translation3::new(2.0, 0.5, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.1),
        );
        let p = predict(&[a, b]);
        let delta = a.inverse() * b;
        assert!((p.translation.vector - (b * delta).translation.vector).norm() < 1e-12);
        assert!((p.rotation.angle() - 0.2).abs() < 1e-12);
        assert_eq!(predict(&[]), Isometry3::identity());
        assert_eq!(predict(&[a]), a);
    }

    #[test]
    fn adaptive_threshold_rules() {
        let mut t = AdaptiveThreshold::new(2.0, 0.1, 100.0);
        assert_eq!(t.threshold(), 2.0);
        t.update(&Isometry3::translation(0.05, 0.0, 0.0));
        assert_eq!(t.threshold(), 2.0);
        t.update(&Isometry3::translation(0.3, 0.0, 0.0));
        t.update(&Isometry3::translation(0.4, 0.0, 0.0));
        assert!((t.threshold() - (0.125f64).sqrt()).abs() < 1e-12);
        let rot = Isometry3::rotation(Vector3::z() * 0.01);
        assert!((AdaptiveThreshold::model_error(&rot, 100.0) - 200.0 * (0.005f64).sin()).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(OdometryConfig::default().validate().is_ok());
        let bad = OdometryConfig {
            convergence_epsilon: 3.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OdometryConfig {
            voxel_size: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn first_frame_is_identity_and_seeds_map() {
        let mut odo = Odometry::new(OdometryConfig::default()).unwrap();
        let scan: Vec<_> = (0..50).map(|i| Point3::new(i as f64 * 0.1, 1.0, 0.0)).collect();
        let f = odo.process(&scan).unwrap();
        assert_eq!(f.pose, Isometry3::identity());
        assert!(!f.degenerate);
        assert!(odo.map().point_count() > 0);
        // Too few points to register: falls back to the prediction.
        let f = odo.process(&scan[..3]).unwrap();
        assert!(f.degenerate);
        assert_eq!(f.pose, f.prediction);
    }
}
