//! BRIEF-256 binary descriptor on a Gaussian smoothed image.
//!
//! Smoothing uses integer weights so that the smoothed image of `255 - I`
//! is exactly `255 * K - S(I)`; inverting a patch flips every comparison.

use crate::types::GrayImage;

/// Pixels a keypoint must keep from every border.
pub const BRIEF_MARGIN: usize = 16;

/// Largest sampling offset in the pattern.
const PATCH_RADIUS: i32 = 15;

/// sigma = 1.4, radius 4, scaled by 256 and rounded.
const KERNEL: [u32; 9] = [4, 26, 92, 198, 256, 198, 92, 26, 4];

pub type BinaryDescriptor = [u64; 4];

/// Test pairs `(x1, y1, x2, y2)`, fixed at compile time.
pub static PATTERN: [[i8; 4]; 256] = make_pattern();

const fn splitmix64(state: u64) -> (u64, u64) {
    let state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (state, z ^ (z >> 31))
}

/// Isotropic offsets, roughly Gaussian with sigma = 31 / 5 (sum of four
/// uniforms), clamped to the patch.
const fn sample_offset(state: u64) -> (u64, i8) {
    let mut s = state;
    let mut acc: i64 = 0;
    let mut k = 0;
    while k < 4 {
        let (next, r) = splitmix64(s);
        s = next;
        // uniform in [-1073, 1073] thousandths of the spread
        acc += (r % 2147) as i64 - 1073;
        k += 1;
    }
    // sum of four U(-1.073, 1.073) has variance 4 * 1.073^2 / 3 ~= 1.535;
    // scale to sigma 6.2: 6.2 / sqrt(1.535) ~= 5.004 px per unit
    let mut v = (acc * 5004 / 1_000_000) as i32;
    if v > PATCH_RADIUS {
        v = PATCH_RADIUS;
    }
    if v < -PATCH_RADIUS {
        v = -PATCH_RADIUS;
    }
    (s, v as i8)
}

const fn make_pattern() -> [[i8; 4]; 256] {
    let mut out = [[0i8; 4]; 256];
    let mut state = 0x5EED_B41E_F256_u64;
    let mut i = 0;
    while i < 256 {
        let mut pair = [0i8; 4];
        let mut j = 0;
        while j < 4 {
            let (s, v) = sample_offset(state);
            state = s;
            pair[j] = v;
            j += 1;
        }
        if pair[0] != pair[2] || pair[1] != pair[3] {
            out[i] = pair;
            i += 1;
        }
    }
    out
}

/// Gaussian smoothed image in integer units (scale `KERNEL.sum()^2`),
/// borders replicated.
pub struct Smoothed {
    width: usize,
    height: usize,
    data: Vec<u32>,
}

impl Smoothed {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let r = (KERNEL.len() / 2) as isize;
        let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
        let mut tmp = vec![0u32; w * h];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = KERNEL
                    .iter()
                    .enumerate()
                    .map(|(k, &wt)| wt * img.get(clamp(x as isize + k as isize - r, w), y) as u32)
                    .sum();
            }
        }
        let mut data = vec![0u32; w * h];
        for y in 0..h {
            for x in 0..w {
                data[y * w + x] = KERNEL
                    .iter()
                    .enumerate()
                    .map(|(k, &wt)| wt * tmp[clamp(y as isize + k as isize - r, h) * w + x])
                    .sum();
            }
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.data[y * self.width + x]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

pub fn in_margin(x: usize, y: usize, width: usize, height: usize) -> bool {
    x >= BRIEF_MARGIN && y >= BRIEF_MARGIN && x + BRIEF_MARGIN <= width && y + BRIEF_MARGIN <= height
}

/// Descriptor at `(x, y)`, or `None` for keypoints inside the border margin.
pub fn describe(smoothed: &Smoothed, x: usize, y: usize) -> Option<BinaryDescriptor> {
    if !in_margin(x, y, smoothed.width(), smoothed.height()) {
        return None;
    }
    let at = |dx: i8, dy: i8| {
        smoothed.get(
            (x as isize + dx as isize) as usize,
            (y as isize + dy as isize) as usize,
        )
    };
    let mut desc = [0u64; 4];
    for (bit, p) in PATTERN.iter().enumerate() {
        if at(p[0], p[1]) < at(p[2], p[3]) {
            desc[bit / 64] |= 1 << (bit % 64);
        }
    }
    Some(desc)
}

/// Convenience wrapper that smooths `img` first.
pub fn describe_brief(img: &GrayImage, x: usize, y: usize) -> Option<BinaryDescriptor> {
    describe(&Smoothed::new(img), x, y)
}

#[inline]
pub fn hamming(a: &BinaryDescriptor, b: &BinaryDescriptor) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_stays_inside_patch() {
        for p in PATTERN.iter() {
            assert!(p.iter().all(|&v| (v as i32).abs() <= PATCH_RADIUS));
            assert!(p[0] != p[2] || p[1] != p[3]);
        }
        // Roughly centred spread, not collapsed.
        let spread: f64 = PATTERN
            .iter()
            .flat_map(|p| p.iter())
            .map(|&v| (v as f64).powi(2))
            .sum::<f64>()
            / 1024.0;
        assert!(spread.sqrt() > 4.0 && spread.sqrt() < 9.0, "{}", spread.sqrt());
    }

    fn noise(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut s = seed;
        GrayImage::from_fn(w, h, |_, _| {
            let (n, r) = splitmix64(s);
            s = n;
            (r & 0xFF) as u8
        })
    }

    #[test]
    fn identical_patches_have_distance_zero() {
        let a = noise(64, 64, 1);
        let mut b = GrayImage::filled(64, 64, 0);
        for y in 0..64 {
            for x in 0..64 {
                b.set(x, y, a.get(x, y));
            }
        }
        let da = describe_brief(&a, 30, 30).unwrap();
        let db = describe_brief(&b, 30, 30).unwrap();
        assert_eq!(hamming(&da, &db), 0);
    }

    #[test]
    fn inverted_patch_flips_every_bit() {
        let img = noise(64, 64, 7);
        let inv = img.map(|v| 255 - v);
        let s = Smoothed::new(&img);
        // Only valid when no test pair compares equal intensities.
        let ties = PATTERN
            .iter()
            .filter(|p| {
                let at = |dx: i8, dy: i8| s.get((32 + dx as isize) as usize, (32 + dy as isize) as usize);
                at(p[0], p[1]) == at(p[2], p[3])
            })
            .count();
        assert_eq!(ties, 0);
        let a = describe_brief(&img, 32, 32).unwrap();
        let b = describe_brief(&inv, 32, 32).unwrap();
        assert_eq!(hamming(&a, &b), 256);
    }

    #[test]
    fn hamming_matches_bitwise_oracle() {
        let img = noise(96, 96, 3);
        let s = Smoothed::new(&img);
        for (x1, y1, x2, y2) in [(20, 20, 70, 70), (40, 33, 41, 33), (16, 16, 79, 79)] {
            let a = describe(&s, x1, y1).unwrap();
            let b = describe(&s, x2, y2).unwrap();
            let mut oracle = 0;
            for p in PATTERN.iter() {
                let bit = |x: usize, y: usize| {
                    let v1 = s.get((x as isize + p[0] as isize) as usize, (y as isize + p[1] as isize) as usize);
                    let v2 = s.get((x as isize + p[2] as isize) as usize, (y as isize + p[3] as isize) as usize);
                    v1 < v2
                };
                if bit(x1, y1) != bit(x2, y2) {
                    oracle += 1;
                }
            }
            assert_eq!(hamming(&a, &b), oracle);
        }
    }

    #[test]
    fn border_keypoints_are_dropped() {
        let img = noise(40, 40, 9);
        assert!(describe_brief(&img, 15, 20).is_none());
        assert!(describe_brief(&img, 20, 24).is_some());
        assert!(describe_brief(&img, 24, 24).is_some());
        assert!(describe_brief(&img, 25, 20).is_none());
    }
}
