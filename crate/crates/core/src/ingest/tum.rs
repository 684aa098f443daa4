//! TUM trajectory text: `timestamp tx ty tz qx qy qz qw` per line.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use crate::error::{Error, Result};
use crate::types::{Pose, Trajectory};

/// Parses TUM text. Blank lines and `#` comments are skipped; quaternions
/// are normalised.
pub fn parse_tum(text: &str, path: &Path) -> Result<Trajectory> {
    let mut poses = Vec::new();
    let mut last: Option<f64> = None;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let fail = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|_| fail(format!("not a number: `{w}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != 8 {
            return Err(fail(format!("expected 8 fields, found {}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(fail("non-finite value".into()));
        }
        if let Some(prev) = last {
            if vals[0] <= prev {
                return Err(fail(format!("timestamp {} does not increase past {prev}", vals[0])));
            }
        }
        last = Some(vals[0]);
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        if q.norm() < 1e-12 {
            return Err(fail("zero quaternion".into()));
        }
        // Already unit quaternions are kept as written so reloads are bit stable.
        let rotation = if (q.norm_squared() - 1.0).abs() <= 4.0 * f64::EPSILON {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        poses.push(Pose::from_parts(vals[0], [vals[1], vals[2], vals[3]], rotation));
    }
    Trajectory::new(poses)
}

/// Formats with shortest round-trip float representation.
pub fn format_tum(traj: &Trajectory) -> String {
    let mut out = String::new();
    for p in traj.poses() {
        let t = p.translation();
        let q = p.rotation().quaternion();
        writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            p.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        )
        .unwrap();
    }
    out
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
        _ => Error::io(path, e),
    })?;
    parse_tum(&text, path)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, format_tum(traj)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("t.txt")
    }

    #[test]
    fn single_identity_row() {
        let t = parse_tum("0 0 0 0 0 0 0 1\n", p()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.poses()[0].isometry, nalgebra::Isometry3::identity());
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let err = parse_tum("1 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_tum("# header\n0 0 0 0 0 0 0 1\n1 0 0 x 0 0 0 1\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(matches!(parse_tum("0 0 0\n", p()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn quaternion_normalised() {
        let t = parse_tum("0 1 2 3 0 0 0 2\n", p()).unwrap();
        assert!((t.poses()[0].rotation().quaternion().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn text_round_trip_is_stable() {
        let poses = (0..100)
            .map(|i| {
                let a = i as f64 * 0.37;
                Pose::from_parts(
                    i as f64 * 0.1,
                    [a.sin() * 3.1, a.cos() / 7.0, 1e-3 * a],
                    UnitQuaternion::from_euler_angles(0.1 * a, -0.2, a),
                )
            })
            .collect();
        let t = Trajectory::new(poses).unwrap();
        let once = format_tum(&t);
        let back = parse_tum(&once, p()).unwrap();
        assert_eq!(back.len(), 100);
        assert_eq!(format_tum(&back), once);
    }
}
