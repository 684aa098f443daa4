use nalgebra::{Point3, Unit, Vector3};

/// Surface shapes a ray can hit.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// Axis-aligned box. `inward` boxes are seen from inside (room walls).
    Box {
        min: Point3<f64>,
        max: Point3<f64>,
        inward: bool,
    },
    /// Infinite plane through `point`, visible from the side `normal` faces.
    Plane {
        point: Point3<f64>,
        normal: Unit<Vector3<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Surface {
    pub shape: Shape,
    /// Reflectance in [0, 1].
    pub albedo: f64,
    /// Checker cell size in metres; 0 disables the texture.
    pub texture_cell: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub normal: Vector3<f64>,
    pub surface: usize,
    /// In-surface coordinates used for texturing.
    pub uv: (f64, f64),
    /// Face id within the surface.
    pub face: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scene {
    pub surfaces: Vec<Surface>,
    pub seed: u64,
}

const EPS: f64 = 1e-9;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic hash of several words to a uniform value in [0, 1).
pub(crate) fn hash_unit(words: &[u64]) -> f64 {
    let h = words.iter().fold(0u64, |acc, &w| splitmix(acc ^ w));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Intersection of a ray with a box via the slab method. Returns the
/// distance, axis and side (0 = min face, 1 = max face) of the face hit.
pub fn ray_box(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    min: &Point3<f64>,
    max: &Point3<f64>,
    inward: bool,
) -> Option<(f64, usize, usize)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_face = (0, 0);
    let mut far_face = (0, 0);
    for a in 0..3 {
        if dir[a].abs() < 1e-300 {
            if origin[a] < min[a] || origin[a] > max[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (t0, t1) = ((min[a] - origin[a]) * inv, (max[a] - origin[a]) * inv);
        let (lo, lo_side, hi, hi_side) = if t0 <= t1 { (t0, 0, t1, 1) } else { (t1, 1, t0, 0) };
        if lo > t_near {
            t_near = lo;
            near_face = (a, lo_side);
        }
        if hi < t_far {
            t_far = hi;
            far_face = (a, hi_side);
        }
    }
    if t_near > t_far {
        return None;
    }
    if inward {
        (t_far > EPS).then_some((t_far, far_face.0, far_face.1))
    } else {
        (t_near > EPS).then_some((t_near, near_face.0, near_face.1))
    }
}

impl Scene {
    /// Nearest hit along a unit ray, if any within `max_range`.
    pub fn cast(&self, origin: &Point3<f64>, dir: &Vector3<f64>, max_range: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (id, s) in self.surfaces.iter().enumerate() {
            let hit = match &s.shape {
                Shape::Box { min, max, inward } => {
                    ray_box(origin, dir, min, max, *inward).map(|(t, axis, side)| {
                        let mut normal = Vector3::zeros();
                        // Outward boxes face away from their interior, inward ones towards it.
                        let outward_sign = if side == 1 { 1.0 } else { -1.0 };
                        normal[axis] = if *inward { -outward_sign } else { outward_sign };
                        let p = origin + dir * t;
                        let (u, v) = match axis {
                            0 => (p.y, p.z),
                            1 => (p.x, p.z),
                            _ => (p.x, p.y),
                        };
                        Hit {
                            distance: t,
                            normal,
                            surface: id,
                            uv: (u, v),
                            face: axis * 2 + side,
                        }
                    })
                }
                Shape::Plane { point, normal } => {
                    let denom = dir.dot(normal);
                    if denom >= -EPS {
                        None
                    } else {
                        let t = (point - origin).dot(normal) / denom;
                        (t > EPS).then(|| {
                            let p = origin + dir * t;
                            let a = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                            let e1 = normal.cross(&a).normalize();
                            let e2 = normal.cross(&e1);
                            let d = p - point;
                            Hit {
                                distance: t,
                                normal: normal.into_inner(),
                                surface: id,
                                uv: (d.dot(&e1), d.dot(&e2)),
                                face: 0,
                            }
                        })
                    }
                }
            };
            if let Some(h) = hit {
                if h.distance <= max_range && best.is_none_or(|b| h.distance < b.distance) {
                    best = Some(h);
                }
            }
        }
        best
    }

    /// Texture factor in [0.2, 1] at a hit: a checker of random gray cells.
    pub fn texture(&self, hit: &Hit) -> f64 {
        let s = &self.surfaces[hit.surface];
        if s.texture_cell <= 0.0 {
            return 1.0;
        }
        let i = (hit.uv.0 / s.texture_cell).floor() as i64;
        let j = (hit.uv.1 / s.texture_cell).floor() as i64;
        0.2 + 0.8 * hash_unit(&[self.seed, hit.surface as u64, hit.face as u64, i as u64, j as u64])
    }
}
