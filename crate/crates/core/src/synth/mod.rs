//! Synthetic lidar datasets rendered by raycasting simple scenes.

mod scene;

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_frame, write_manifest, write_trajectory, DatasetManifest};
use crate::types::{Gray16Image, LidarFrame, Pose, Trajectory};

pub use scene::{ray_box, Hit, Scene, Shape, Surface};

/// Range image counts per metre.
pub const RANGE_UNIT_M: f64 = 0.002;
/// Signal counts for a unit-albedo, face-on return at 1 m.
const SIGNAL_GAIN: f64 = 240_000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub rows: usize,
    pub cols: usize,
    /// Half the vertical field of view, degrees.
    pub vertical_half_fov_deg: f64,
    pub max_range: f64,
    /// Standard deviation of additive range noise, metres.
    pub range_noise_m: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 1024,
            vertical_half_fov_deg: 22.5,
            max_range: 120.0,
            range_noise_m: 0.01,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::InvalidArgument(format!("sensor {}x{}", self.rows, self.cols)));
        }
        if !(self.vertical_half_fov_deg > 0.0 && self.vertical_half_fov_deg < 90.0) {
            return Err(Error::InvalidArgument(format!(
                "vertical half fov {}",
                self.vertical_half_fov_deg
            )));
        }
        if !(self.max_range > 0.0 && self.max_range <= 65535.0 * RANGE_UNIT_M) {
            return Err(Error::InvalidArgument(format!("max range {}", self.max_range)));
        }
        if !(self.range_noise_m >= 0.0) {
            return Err(Error::InvalidArgument(format!("range noise {}", self.range_noise_m)));
        }
        Ok(())
    }

    /// Row 0 looks up, the last row looks down.
    pub fn elevation(&self, row: usize) -> f64 {
        let half = self.vertical_half_fov_deg.to_radians();
        half - 2.0 * half * row as f64 / (self.rows - 1) as f64
    }

    /// Column `cols / 2` looks along +x; azimuth decreases with column.
    pub fn azimuth(&self, col: usize) -> f64 {
        PI - 2.0 * PI * col as f64 / self.cols as f64
    }

    pub fn ray(&self, row: usize, col: usize) -> Vector3<f64> {
        let (el, az) = (self.elevation(row), self.azimuth(col));
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

/// Standard normal sample keyed by the given words (Box-Muller).
fn keyed_normal(words: &[u64]) -> f64 {
    let mut w = words.to_vec();
    let u1 = scene::hash_unit(&w).max(1e-300);
    w.push(0xA5A5);
    let u2 = scene::hash_unit(&w);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Renders one frame seen from `pose` (sensor to world). `frame_key`
/// decorrelates the noise between frames.
pub fn raycast_frame(
    scene: &Scene,
    pose: &Isometry3<f64>,
    sensor: &SensorModel,
    timestamp: f64,
    frame_key: u64,
) -> Result<LidarFrame> {
    sensor.validate()?;
    let (h, w) = (sensor.rows, sensor.cols);
    let origin = Point3::from(pose.translation.vector);
    let pixels: Vec<(u16, u16, [f32; 3])> = (0..h * w)
        .into_par_iter()
        .map(|i| {
            let (row, col) = (i / w, i % w);
            let local = sensor.ray(row, col);
            let dir = pose.rotation * local;
            let Some(hit) = scene.cast(&origin, &dir, sensor.max_range) else {
                return (0, 0, [0.0; 3]);
            };
            let noise = if sensor.range_noise_m > 0.0 {
                sensor.range_noise_m * keyed_normal(&[scene.seed, frame_key, i as u64])
            } else {
                0.0
            };
            let d = (hit.distance + noise).max(RANGE_UNIT_M);
            let counts = (d / RANGE_UNIT_M).round().clamp(1.0, 65535.0) as u16;
            let cos = dir.dot(&hit.normal).abs();
            let albedo = scene.surfaces[hit.surface].albedo * scene.texture(&hit);
            let signal = (SIGNAL_GAIN * albedo * cos / (d * d).max(1.0)).round().clamp(1.0, 65535.0) as u16;
            let p = local * d;
            (counts, signal, [p.x as f32, p.y as f32, p.z as f32])
        })
        .collect();
    let range = Gray16Image::new(w, h, pixels.iter().map(|p| p.0).collect())?;
    let signal = Gray16Image::new(w, h, pixels.iter().map(|p| p.1).collect())?;
    LidarFrame::new(timestamp, range, signal, pixels.into_iter().map(|p| p.2).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Room,
    Corridor,
    Open,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Room, Scenario::Corridor, Scenario::Open];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Room => "room",
            Scenario::Corridor => "corridor",
            Scenario::Open => "open",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario `{name}`")))
    }

    /// Metres travelled per frame when not overridden.
    pub fn default_step(self) -> f64 {
        match self {
            Scenario::Room => 0.1,
            Scenario::Corridor => 0.2,
            Scenario::Open => 0.5,
        }
    }

    pub fn scene(self, seed: u64) -> Scene {
        let boxed = |min: [f64; 3], max: [f64; 3], inward: bool, albedo: f64, cell: f64| Surface {
            shape: Shape::Box {
                min: Point3::from(min),
                max: Point3::from(max),
                inward,
            },
            albedo,
            texture_cell: cell,
        };
        let surfaces = match self {
            Scenario::Room => vec![
                boxed([-6.0, -5.0, -1.5], [6.0, 5.0, 2.0], true, 0.7, 0.5),
                boxed([-0.6, -0.4, -1.5], [0.6, 0.4, -0.3], false, 0.5, 0.3),
                boxed([3.5, 3.0, -1.5], [5.2, 4.6, 1.2], false, 0.6, 0.4),
                boxed([-5.5, -4.5, -1.5], [-4.0, -2.8, 0.5], false, 0.4, 0.4),
                boxed([4.2, -4.2, -1.5], [5.0, -1.0, 0.2], false, 0.8, 0.3),
                boxed([-2.5, 4.2, -1.5], [-1.0, 5.0, 1.6], false, 0.5, 0.4),
                boxed([-6.0, 0.5, 0.4], [-5.6, 2.5, 1.4], false, 0.9, 0.25),
            ],
            Scenario::Corridor => vec![boxed([-1.5, -300.0, -1.2], [1.5, 300.0, 1.5], true, 0.7, 0.4)],
            Scenario::Open => {
                let mut s = vec![Surface {
                    shape: Shape::Plane {
                        point: Point3::new(0.0, 0.0, -1.8),
                        normal: Vector3::z_axis(),
                    },
                    albedo: 0.3,
                    texture_cell: 1.0,
                }];
                for k in 0..16 {
                    let x0 = -20.0 + 14.0 * k as f64;
                    let jitter = scene::hash_unit(&[seed, 7, k]);
                    let depth = 4.0 + 6.0 * jitter;
                    let height = 3.0 + 8.0 * scene::hash_unit(&[seed, 8, k]);
                    s.push(boxed([x0, 8.0, -1.8], [x0 + 9.0, 8.0 + depth, height], false, 0.6, 0.8));
                    let x1 = x0 + 5.0 * jitter;
                    s.push(boxed([x1, -9.0 - depth, -1.8], [x1 + 7.0, -9.0, height * 0.8], false, 0.5, 0.8));
                }
                s
            }
        };
        Scene { surfaces, seed }
    }

    /// World poses of the sensor for `frames` frames.
    pub fn trajectory(self, frames: usize, step: f64) -> Vec<Isometry3<f64>> {
        match self {
            Scenario::Room => {
                let radius = 2.0;
                (0..frames)
                    .map(|k| {
                        let a = k as f64 * step / radius;
                        let pos = Vector3::new(radius * a.cos(), radius * a.sin(), 0.1 * (0.7 * a).sin());
                        let rot = UnitQuaternion::from_euler_angles(
                            0.03 * (1.3 * a).sin(),
                            0.02 * (0.9 * a).cos(),
                            a + PI / 2.0,
                        );
                        Isometry3::from_parts(Translation3::from(pos), rot)
                    })
                    .collect()
            }
            Scenario::Corridor => {
                let rot = UnitQuaternion::from_euler_angles(0.0, 0.0, PI / 2.0);
                let mut y = 0.0;
                (0..frames)
                    .map(|k| {
                        if k > 0 {
                            y += step * (1.0 + 0.5 * (0.4 * k as f64).sin());
                        }
                        Isometry3::from_parts(Translation3::new(0.0, y, 0.0), rot)
                    })
                    .collect()
            }
            Scenario::Open => (0..frames)
                .map(|k| Isometry3::translation(k as f64 * step, 0.0, 0.0))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub scenario: Scenario,
    pub frames: usize,
    pub step: f64,
    pub seed: u64,
    pub sensor: SensorModel,
    /// Seconds between frames.
    pub frame_period: f64,
}

impl SynthSpec {
    pub fn new(scenario: Scenario, frames: usize, seed: u64) -> Self {
        Self {
            scenario,
            frames,
            step: scenario.default_step(),
            seed,
            sensor: SensorModel::default(),
            frame_period: 0.1,
        }
    }
}

/// Ground truth relative to the first pose, so the odometry frame and the
/// ground-truth frame coincide.
pub fn ground_truth(spec: &SynthSpec) -> Trajectory {
    let world = spec.scenario.trajectory(spec.frames, spec.step);
    let inv = world.first().map(|p| p.inverse()).unwrap_or_else(Isometry3::identity);
    Trajectory::new(
        world
            .iter()
            .enumerate()
            .map(|(k, p)| Pose::new(k as f64 * spec.frame_period, inv * p))
            .collect(),
    )
    .expect("timestamps increase by construction")
}

/// Renders all frames in memory.
pub fn render(spec: &SynthSpec) -> Result<Vec<LidarFrame>> {
    let scene = spec.scenario.scene(spec.seed);
    spec.scenario
        .trajectory(spec.frames, spec.step)
        .iter()
        .enumerate()
        .map(|(k, pose)| raycast_frame(&scene, pose, &spec.sensor, k as f64 * spec.frame_period, k as u64))
        .collect()
}

/// Writes a complete dataset (frames, manifest, ground truth) to `out`.
pub fn make_dataset(spec: &SynthSpec, out: &Path) -> Result<Trajectory> {
    if spec.frames < 2 {
        return Err(Error::InvalidArgument(format!("{} frames, need at least 2", spec.frames)));
    }
    if !(spec.step > 0.0 && spec.frame_period > 0.0) {
        return Err(Error::InvalidArgument("step and frame period must be positive".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let scene = spec.scenario.scene(spec.seed);
    let mut entries = Vec::with_capacity(spec.frames);
    for (k, pose) in spec.scenario.trajectory(spec.frames, spec.step).iter().enumerate() {
        let frame = raycast_frame(&scene, pose, &spec.sensor, k as f64 * spec.frame_period, k as u64)?;
        entries.push(write_frame(out, k, &frame)?);
    }
    let gt = ground_truth(spec);
    let gt_name = "ground_truth.tum";
    write_trajectory(&out.join(gt_name), &gt)?;
    write_manifest(
        out,
        &DatasetManifest {
            sensor: format!("synthetic-{}", spec.scenario.name()),
            width: spec.sensor.cols,
            height: spec.sensor.rows,
            range_unit_m: RANGE_UNIT_M,
            frame_count: entries.len(),
            frames: entries,
            ground_truth: Some(gt_name.into()),
        },
    )?;
    Ok(gt)
}
