//! Robust point-to-point scan-to-map registration (Gauss-Newton, IRLS).

use nalgebra::{Isometry3, Matrix3, Matrix3x6, Matrix6, Point3, Translation3, UnitQuaternion, Vector3, Vector6};
use rayon::prelude::*;

use super::voxel_map::VoxelMap;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegistrationParams {
    /// Correspondences farther than this are ignored.
    pub max_correspondence_distance: f64,
    /// Geman-McClure scale.
    pub kernel_scale: f64,
    pub max_iterations: usize,
    pub convergence_epsilon: f64,
    pub min_correspondences: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Registration {
    pub pose: Isometry3<f64>,
    pub iterations: usize,
    /// Correspondences used in the last iteration.
    pub correspondences: usize,
    /// Robust cost before and after each accepted step, with that step's
    /// correspondences held fixed.
    pub cost_steps: Vec<(f64, f64)>,
}

#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Jacobian of `r = T p - q` under the left perturbation
/// `T <- Exp(delta) T`, `delta = [omega, v]`: `[-skew(T p) | I]`.
pub fn gn_jacobian(p: &Point3<f64>, pose: &Isometry3<f64>) -> Matrix3x6<f64> {
    let tp = pose * p;
    let mut j = Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&tp.coords)));
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    j
}

/// Applies the left increment `Exp(delta) * pose`.
pub fn apply_increment(delta: &Vector6<f64>, pose: &Isometry3<f64>) -> Isometry3<f64> {
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    let v = Vector3::new(delta[3], delta[4], delta[5]);
    let step = Isometry3::from_parts(Translation3::from(v), UnitQuaternion::new(omega));
    let mut out = step * pose;
    out.rotation.renormalize();
    out
}

/// Geman-McClure loss `rho(r) = k^2 r^2 / (2 (k^2 + r^2))`.
#[inline]
pub fn geman_mcclure(r2: f64, k: f64) -> f64 {
    let k2 = k * k;
    0.5 * k2 * r2 / (k2 + r2)
}

/// IRLS weight `rho'(r) / r = k^4 / (k^2 + r^2)^2`.
#[inline]
pub fn geman_mcclure_weight(r2: f64, k: f64) -> f64 {
    let k2 = k * k;
    let d = k2 + r2;
    k2 * k2 / (d * d)
}

fn robust_cost(pairs: &[(Point3<f64>, Point3<f64>)], pose: &Isometry3<f64>, k: f64) -> f64 {
    pairs
        .iter()
        .map(|(p, q)| geman_mcclure((pose * p - q).norm_squared(), k))
        .sum()
}

/// Registers sensor-frame `scan` against `map`, starting from `initial`.
///
/// Each iteration re-associates every transformed scan point with its
/// nearest map point within the correspondence distance, solves the
/// weighted normal equations, and halves the step until the robust cost
/// (with those correspondences) does not increase.
pub fn register(
    scan: &[Point3<f64>],
    map: &VoxelMap,
    initial: &Isometry3<f64>,
    params: &RegistrationParams,
) -> Result<Registration> {
    if scan.is_empty() {
        return Err(Error::InvalidArgument("empty scan".into()));
    }
    let k = params.kernel_scale;
    let mut pose = *initial;
    let mut cost_steps = Vec::new();
    let mut correspondences = 0;
    let mut iterations = 0;

    for _ in 0..params.max_iterations {
        iterations += 1;
        let pairs: Vec<(Point3<f64>, Point3<f64>)> = scan
            .par_iter()
            .filter_map(|p| {
                map.nearest(&(pose * p), params.max_correspondence_distance)
                    .map(|(q, _)| (*p, q))
            })
            .collect();
        correspondences = pairs.len();
        if pairs.len() < params.min_correspondences {
            return Err(Error::Degenerate(format!(
                "{} correspondences, need {}",
                pairs.len(),
                params.min_correspondences
            )));
        }

        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for (p, q) in &pairs {
            let r = pose * p - q;
            let w = geman_mcclure_weight(r.norm_squared(), k);
            let j = gn_jacobian(p, &pose);
            h += w * j.transpose() * j;
            g += w * j.transpose() * r;
        }
        let Some(chol) = h.cholesky() else {
            return Err(Error::Degenerate("singular normal equations".into()));
        };
        let delta = -chol.solve(&g);

        let before = robust_cost(&pairs, &pose, k);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let candidate = apply_increment(&(delta * scale), &pose);
            let after = robust_cost(&pairs, &candidate, k);
            if after <= before {
                accepted = Some((candidate, after));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, after)) = accepted else {
            break;
        };
        pose = next;
        cost_steps.push((before, after));
        if (delta * scale).norm() < params.convergence_epsilon {
            break;
        }
    }

    Ok(Registration {
        pose,
        iterations,
        correspondences,
        cost_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64, max_trans: f64) -> Isometry3<f64> {
        let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            .normalize();
        let t = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            .normalize()
            * rng.gen_range(0.0..max_trans);
        Isometry3::from_parts(
            Translation3::from(t),
            UnitQuaternion::new(axis * rng.gen_range(0.0..max_angle)),
        )
    }

    #[test]
    fn jacobian_at_origin() {
        let j = gn_jacobian(&Point3::origin(), &Isometry3::identity());
        assert_eq!(j.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::zeros());
        assert_eq!(j.fixed_view::<3, 3>(0, 3).into_owned(), Matrix3::identity());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let pose = random_pose(&mut rng, 3.0, 10.0);
            let p = Point3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-5.0..5.0));
            let analytic = gn_jacobian(&p, &pose);
            let h = 1e-6;
            for c in 0..6 {
                let mut d = Vector6::zeros();
                d[c] = h;
                let plus = apply_increment(&d, &pose) * p;
                let minus = apply_increment(&(-d), &pose) * p;
                let fd = (plus - minus) / (2.0 * h);
                for r in 0..3 {
                    assert!((fd[r] - analytic[(r, c)]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn jacobian_rotates_with_frame() {
        // 90 degrees about z sends T p = (1, 0, 0) to (0, 1, 0).
        let p = Point3::new(1.0, 0.0, 0.0);
        let rz = Isometry3::rotation(Vector3::z() * std::f64::consts::FRAC_PI_2);
        let j0 = gn_jacobian(&p, &Isometry3::identity());
        let j1 = gn_jacobian(&p, &rz);
        // -skew((1,0,0)) has (2,1) = -1, (1,2) = 1; -skew((0,1,0)) has (0,2) = -1, (2,0) = 1.
        assert_eq!(j0[(2, 1)], -1.0);
        assert_eq!(j0[(1, 2)], 1.0);
        assert!((j1[(0, 2)] + 1.0).abs() < 1e-15);
        assert!((j1[(2, 0)] - 1.0).abs() < 1e-15);
        assert!(j1[(1, 0)].abs() < 1e-15 && j1[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn weights_and_loss_agree() {
        // d rho / d r = w * r, checked numerically.
        for (r, k) in [(0.1, 1.0), (1.0, 0.5), (3.0, 2.0)] {
            let h = 1e-6;
            let d = (geman_mcclure((r + h) * (r + h), k) - geman_mcclure((r - h) * (r - h), k)) / (2.0 * h);
            assert!((d - geman_mcclure_weight(r * r, k) * r).abs() < 1e-8);
        }
    }
}
