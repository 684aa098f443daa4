//! Absolute pose error between an estimated and a ground-truth trajectory.

use nalgebra::{Isometry3, Matrix3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Pose, Trajectory};

/// `[evaluation]` config section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub align: bool,
    pub max_dt: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            align: true,
            max_dt: 0.02,
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_dt >= 0.0 && self.max_dt.is_finite()) {
            return Err(Error::Config(format!("evaluation.max_dt = {}", self.max_dt)));
        }
        Ok(())
    }
}

/// Pairs each estimated pose with the nearest unused ground-truth pose
/// within `max_dt`. Candidate pairs are taken globally in order of
/// increasing time difference, ties by estimate index, so each side is
/// used at most once. Output is ordered by estimate timestamp.
pub fn associate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<Vec<(Pose, Pose)>> {
    if est.is_empty() || gt.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let (e, g) = (est.poses(), gt.poses());
    let mut candidates = Vec::new();
    for (i, pe) in e.iter().enumerate() {
        // Ground truth is sorted, so only a window around the timestamp matters.
        let start = g.partition_point(|p| p.timestamp < pe.timestamp - max_dt);
        for (j, pg) in g.iter().enumerate().skip(start) {
            let dt = (pg.timestamp - pe.timestamp).abs();
            if pg.timestamp > pe.timestamp + max_dt {
                break;
            }
            if dt <= max_dt {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut est_used = vec![false; e.len()];
    let mut gt_used = vec![false; g.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !est_used[i] && !gt_used[j] {
            est_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no pose pairs within {max_dt} s"
        )));
    }
    pairs.sort_unstable();
    Ok(pairs.into_iter().map(|(i, j)| (e[i], g[j])).collect())
}

/// Least-squares rigid transform `T` minimising `sum |T src_i - dst_i|^2`.
pub fn umeyama_align(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<Isometry3<f64>> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source vs {} target points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("{} points, need 3", src.len())));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let (cs, cd) = (s.coords - mu_s, d.coords - mu_d);
        cov += cd * cs.transpose();
        spread += cs * cs.transpose();
    }
    cov /= n;
    spread /= n;

    // Collinear (or coincident) sources leave a rotation about the line free.
    let eig = spread.symmetric_eigen();
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0].max(1.0) {
        return Err(Error::DegenerateGeometry("collinear positions".into()));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    let rotation = UnitQuaternion::from_matrix(&r);
    let t = mu_d - rotation * mu_s;
    Ok(Isometry3::from_parts(Translation3::from(t), rotation))
}

/// Summary statistics of a non-negative error series.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub rmse: f64,
    pub max: f64,
}

impl SeriesStats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        Self {
            mean: values.iter().sum::<f64>() / n,
            rmse: (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
            max: values.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub per_frame: Vec<usize>,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

impl PointStats {
    pub fn of(per_frame: Vec<usize>) -> Self {
        let mean = if per_frame.is_empty() {
            0.0
        } else {
            per_frame.iter().sum::<usize>() as f64 / per_frame.len() as f64
        };
        Self {
            mean,
            min: per_frame.iter().copied().min().unwrap_or(0),
            max: per_frame.iter().copied().max().unwrap_or(0),
            per_frame,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub translation: SeriesStats,
    /// Degrees.
    pub rotation: SeriesStats,
    pub translation_series: Vec<f64>,
    pub rotation_series: Vec<f64>,
    pub pairs: usize,
    pub aligned: bool,
    pub points: Option<PointStats>,
}

impl ErrorReport {
    /// `(trans mean/trans rmse, rot mean)` with three decimals.
    pub fn table_cell(&self) -> String {
        format_cell(self.translation.mean, self.translation.rmse, self.rotation.mean)
    }
}

pub fn format_cell(trans_mean: f64, trans_rmse: f64, rot_mean: f64) -> String {
    format!("({trans_mean:.3}/{trans_rmse:.3}, {rot_mean:.3})")
}

/// Geodesic angle between two rotations, in degrees.
///
/// Equal to `acos((trace(Ra^T Rb) - 1) / 2)`, computed from the relative
/// quaternion so that tiny angles keep full precision.
pub fn rotation_angle_deg(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    // The product below is not exact, so identical inputs would give ~1e-15.
    if a.coords == b.coords || a.coords == -b.coords {
        return 0.0;
    }
    let q = (a.inverse() * b).into_inner();
    (2.0 * q.imag().norm().atan2(q.w.abs())).to_degrees()
}

pub fn ape(est: &Trajectory, gt: &Trajectory, cfg: &EvaluationConfig) -> Result<ErrorReport> {
    let pairs = associate(est, gt, cfg.max_dt)?;
    let alignment = if cfg.align {
        let src: Vec<_> = pairs.iter().map(|(e, _)| Point3::from(e.translation())).collect();
        let dst: Vec<_> = pairs.iter().map(|(_, g)| Point3::from(g.translation())).collect();
        let fit = umeyama_align(&src, &dst)?;
        // Rounding can leave the closed form a hair worse than no motion at all.
        let cost = |t: &Isometry3<f64>| -> f64 {
            src.iter().zip(&dst).map(|(s, d)| (t * s - d).norm_squared()).sum()
        };
        if cost(&Isometry3::identity()) <= cost(&fit) {
            Isometry3::identity()
        } else {
            fit
        }
    } else {
        Isometry3::identity()
    };
    let mut translation_series = Vec::with_capacity(pairs.len());
    let mut rotation_series = Vec::with_capacity(pairs.len());
    for (e, g) in &pairs {
        let aligned = alignment * e.isometry;
        translation_series.push((aligned.translation.vector - g.translation()).norm());
        rotation_series.push(rotation_angle_deg(&g.isometry.rotation, &aligned.rotation));
    }
    Ok(ErrorReport {
        translation: SeriesStats::of(&translation_series),
        rotation: SeriesStats::of(&rotation_series),
        translation_series,
        rotation_series,
        pairs: pairs.len(),
        aligned: cfg.align,
        points: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(ts: &[f64], f: impl Fn(usize) -> Isometry3<f64>) -> Trajectory {
        Trajectory::new(ts.iter().enumerate().map(|(i, &t)| Pose::new(t, f(i))).collect()).unwrap()
    }

    fn curve(i: usize) -> Isometry3<f64> {
        let a = i as f64 * 0.3;
        Isometry3::from_parts(
            Translation3::new(a.cos() * 3.0, a.sin() * 2.0, 0.1 * a),
            UnitQuaternion::from_euler_angles(0.01 * a, 0.02, a),
        )
    }

    #[test]
    fn associate_identical_and_offset() {
        let ts: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let a = traj(&ts, curve);
        assert_eq!(associate(&a, &a, 0.02).unwrap().len(), 10);
        let shifted: Vec<f64> = ts.iter().map(|t| t + 0.05).collect();
        let b = traj(&shifted, curve);
        assert!(associate(&b, &a, 0.02).is_err());
        let jitter: Vec<f64> = ts
            .iter()
            .enumerate()
            .map(|(i, t)| t + if i % 2 == 0 { 0.005 } else { -0.005 })
            .collect();
        let c = traj(&jitter, curve);
        assert_eq!(associate(&c, &a, 0.02).unwrap().len(), 10);
    }

    #[test]
    fn gt_used_once() {
        let gt = traj(&[0.0], curve);
        let est = traj(&[-0.01, 0.005], curve);
        let pairs = associate(&est, &gt, 0.02).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].0.timestamp, 0.005);
    }

    #[test]
    fn umeyama_recovers_transform() {
        let src: Vec<_> = (0..20).map(|i| Point3::from(curve(i).translation.vector)).collect();
        let truth = Isometry3::from_parts(
            Translation3::new(1.0, -2.0, 0.5),
            UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
        );
        let dst: Vec<_> = src.iter().map(|p| truth * p).collect();
        let got = umeyama_align(&src, &dst).unwrap();
        assert!((got.translation.vector - truth.translation.vector).norm() < 1e-9);
        assert!(got.rotation.angle_to(&truth.rotation) < 1e-9);
        let id = umeyama_align(&src, &src).unwrap();
        assert!(id.translation.vector.norm() < 1e-12 && id.rotation.angle() < 1e-9);
    }

    #[test]
    fn umeyama_mirror_gives_proper_rotation() {
        let src: Vec<_> = (0..20).map(|i| Point3::from(curve(i).translation.vector)).collect();
        let dst: Vec<_> = src.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let got = umeyama_align(&src, &dst).unwrap();
        let det = got.rotation.to_rotation_matrix().matrix().determinant();
        assert!((det - 1.0).abs() < 1e-9);
    }

    #[test]
    fn umeyama_rejects_collinear() {
        let src: Vec<_> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(umeyama_align(&src, &src), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn ape_examples() {
        let ts: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let gt = traj(&ts, curve);
        let zero = ape(&gt, &gt, &EvaluationConfig::default()).unwrap();
        assert_eq!(zero.table_cell(), "(0.000/0.000, 0.000)");
        let off = traj(&ts, |i| Isometry3::translation(0.05, 0.0, 0.0) * curve(i));
        let cfg = EvaluationConfig {
            align: false,
            ..Default::default()
        };
        let r = ape(&off, &gt, &cfg).unwrap();
        assert_eq!(r.table_cell(), "(0.050/0.050, 0.000)");
        assert_eq!(r.pairs, 10);
    }

    #[test]
    fn rotation_angle_matches_trace_formula() {
        let a = UnitQuaternion::from_euler_angles(0.3, -0.4, 2.0);
        for angle in [0.5f64, 1.5, 3.0] {
            let b = a * UnitQuaternion::from_euler_angles(angle / 3.0, angle / 2.0, -angle);
            let r = (a.inverse() * b).to_rotation_matrix();
            let trace = ((r.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees();
            assert!((rotation_angle_deg(&a, &b) - trace).abs() < 1e-9);
        }
        assert_eq!(rotation_angle_deg(&a, &a), 0.0);
    }

    #[test]
    fn cell_format() {
        assert_eq!(format_cell(0.045, 0.05, 0.721), "(0.045/0.050, 0.721)");
    }
}
