use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;

use nalgebra::{Isometry3, Point3};

type Voxel = [i64; 3];

/// Sparse voxel grid holding at most `max_points_per_voxel` map points per
/// cell. Hashing is seeded deterministically.
#[derive(Clone, Debug)]
pub struct VoxelMap {
    voxel_size: f64,
    max_points_per_voxel: usize,
    max_range: f64,
    voxels: HashMap<Voxel, Vec<Point3<f64>>, BuildHasherDefault<DefaultHasher>>,
}

impl VoxelMap {
    pub fn new(voxel_size: f64, max_points_per_voxel: usize, max_range: f64) -> Self {
        assert!(voxel_size > 0.0 && max_points_per_voxel > 0 && max_range > 0.0);
        Self {
            voxel_size,
            max_points_per_voxel,
            max_range,
            voxels: HashMap::default(),
        }
    }

    #[inline]
    pub fn voxel_of(&self, p: &Point3<f64>) -> Voxel {
        [
            (p.x / self.voxel_size).floor() as i64,
            (p.y / self.voxel_size).floor() as i64,
            (p.z / self.voxel_size).floor() as i64,
        ]
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxel_count(&self) -> usize {
        self.voxels.len()
    }

    pub fn point_count(&self) -> usize {
        self.voxels.values().map(Vec::len).sum()
    }

    pub fn voxel_points(&self, voxel: Voxel) -> &[Point3<f64>] {
        self.voxels.get(&voxel).map_or(&[], Vec::as_slice)
    }

    pub fn clear(&mut self) {
        self.voxels.clear();
    }

    /// Adds map-frame points, filling each voxel up to the cap.
    pub fn add_points(&mut self, points: impl IntoIterator<Item = Point3<f64>>) {
        for p in points {
            let cap = self.max_points_per_voxel;
            let key = self.voxel_of(&p);
            let cell = self.voxels.entry(key).or_default();
            if cell.len() < cap {
                cell.push(p);
            }
        }
    }

    /// Drops every point farther than the map range from `origin`.
    pub fn remove_far(&mut self, origin: &Point3<f64>) {
        let max_sq = self.max_range * self.max_range;
        self.voxels.retain(|_, pts| {
            pts.retain(|p| (p - origin).norm_squared() <= max_sq);
            !pts.is_empty()
        });
    }

    /// Transforms sensor-frame `points` by `pose`, inserts them, then
    /// evicts points out of range of the pose's position.
    pub fn insert(&mut self, points: &[Point3<f64>], pose: &Isometry3<f64>) {
        self.add_points(points.iter().map(|p| pose * p));
        self.remove_far(&Point3::from(pose.translation.vector));
    }

    /// Exact nearest neighbour among the 3x3x3 voxels around `query`,
    /// rejected beyond `radius`.
    pub fn nearest(&self, query: &Point3<f64>, radius: f64) -> Option<(Point3<f64>, f64)> {
        let [kx, ky, kz] = self.voxel_of(query);
        let mut best: Option<(Point3<f64>, f64)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(pts) = self.voxels.get(&[kx + dx, ky + dy, kz + dz]) else {
                        continue;
                    };
                    for p in pts {
                        let d = (p - query).norm_squared();
                        if best.is_none_or(|(_, bd)| d < bd) {
                            best = Some((*p, d));
                        }
                    }
                }
            }
        }
        best.map(|(p, d)| (p, d.sqrt()))
            .filter(|&(_, d)| d <= radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point() {
        let mut map = VoxelMap::new(1.0, 20, 100.0);
        map.insert(&[Point3::new(0.5, 0.5, 0.5)], &Isometry3::identity());
        assert_eq!(map.voxel_count(), 1);
        assert_eq!(map.point_count(), 1);
    }

    #[test]
    fn voxel_cap() {
        let mut map = VoxelMap::new(1.0, 20, 100.0);
        let pts: Vec<_> = (0..25).map(|i| Point3::new(0.01 * i as f64, 0.2, 0.3)).collect();
        map.insert(&pts, &Isometry3::identity());
        assert_eq!(map.voxel_count(), 1);
        assert_eq!(map.point_count(), 20);
        // Stored points lie inside their voxel.
        for p in map.voxel_points([0, 0, 0]) {
            assert_eq!(map.voxel_of(p), [0, 0, 0]);
        }
    }

    #[test]
    fn far_points_evicted_after_pose_update() {
        let mut map = VoxelMap::new(1.0, 20, 10.0);
        map.insert(&[Point3::new(1.0, 0.0, 0.0)], &Isometry3::identity());
        map.insert(&[Point3::new(0.0, 0.0, 0.0)], &Isometry3::translation(11.5, 0.0, 0.0));
        assert_eq!(map.point_count(), 1);
        assert_eq!(map.voxel_points(map.voxel_of(&Point3::new(11.5, 0.0, 0.0))).len(), 1);
    }

    #[test]
    fn nearest_basics() {
        let mut map = VoxelMap::new(1.0, 20, 100.0);
        let p = Point3::new(0.3, 0.3, 0.3);
        map.add_points([p]);
        let (q, d) = map.nearest(&p, 0.5).unwrap();
        assert_eq!((q, d), (p, 0.0));
        assert!(map.nearest(&Point3::new(1.3, 0.3, 0.3), 0.5).is_none());
    }

    #[test]
    fn nearest_matches_brute_force_within_one_voxel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point3<f64>> = (0..1000)
            .map(|_| Point3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
            .collect();
        let mut map = VoxelMap::new(1.0, 1000, 100.0);
        map.add_points(pts.iter().copied());
        let mut checked = 0;
        for _ in 0..500 {
            let q = Point3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let (truth, td) = pts
                .iter()
                .map(|p| (*p, (p - q).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if td <= map.voxel_size() {
                let (got, gd) = map.nearest(&q, 10.0).unwrap();
                assert_eq!(got, truth);
                assert_eq!(gd, td);
                checked += 1;
            }
        }
        assert!(checked > 400);
    }
}
