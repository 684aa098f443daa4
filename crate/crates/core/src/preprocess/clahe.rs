//! Contrast limited adaptive histogram equalization.
//!
//! Follows the common tile layout: the image is padded (reflect-101) up to a
//! whole number of equal tiles, each tile gets a clipped-histogram
//! equalization lookup table, and output pixels bilinearly blend the four
//! nearest tile tables.

use crate::error::{Error, Result};
use crate::types::GrayImage;

const BINS: usize = 256;

pub fn clahe(img: &GrayImage, clip: f64, tiles: (usize, usize)) -> Result<GrayImage> {
    let (tile_rows, tile_cols) = tiles;
    if tile_rows == 0 || tile_cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "tile grid {tile_rows}x{tile_cols}"
        )));
    }
    if !(clip >= 1.0) {
        return Err(Error::InvalidArgument(format!("clip limit {clip} < 1")));
    }
    let (w, h) = (img.width(), img.height());
    if w < tile_cols || h < tile_rows {
        return Err(Error::InvalidArgument(format!(
            "{w}x{h} image is smaller than the {tile_cols}x{tile_rows} tile grid"
        )));
    }

    let luts = tile_luts(img, clip, tiles);
    let tile_w = w.div_ceil(tile_cols);
    let tile_h = h.div_ceil(tile_rows);

    // Horizontal blend parameters are identical for every row.
    let inv_tw = 1.0 / tile_w as f64;
    let cols: Vec<(usize, usize, f64)> = (0..w)
        .map(|x| {
            let txf = x as f64 * inv_tw - 0.5;
            let tx1 = txf.floor();
            let xa = txf - tx1;
            let tx1 = tx1 as isize;
            let lo = tx1.max(0) as usize;
            let hi = ((tx1 + 1) as usize).min(tile_cols - 1);
            (lo, hi, xa)
        })
        .collect();

    let inv_th = 1.0 / tile_h as f64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let tyf = y as f64 * inv_th - 0.5;
        let ty1 = tyf.floor();
        let ya = tyf - ty1;
        let ty1 = ty1 as isize;
        let top = ty1.max(0) as usize;
        let bottom = ((ty1 + 1) as usize).min(tile_rows - 1);
        for (x, &(left, right, xa)) in cols.iter().enumerate() {
            let v = img.get(x, y) as usize;
            let lut = |r: usize, c: usize| luts[r * tile_cols + c][v] as f64;
            let upper = lut(top, left) * (1.0 - xa) + lut(top, right) * xa;
            let lower = lut(bottom, left) * (1.0 - xa) + lut(bottom, right) * xa;
            let res = upper * (1.0 - ya) + lower * ya;
            out.push(res.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(w, h, out)
}

/// Per-tile lookup tables, row-major over the tile grid.
pub(crate) fn tile_luts(img: &GrayImage, clip: f64, tiles: (usize, usize)) -> Vec<[u8; BINS]> {
    let (tile_rows, tile_cols) = tiles;
    let (w, h) = (img.width(), img.height());
    let tile_w = w.div_ceil(tile_cols);
    let tile_h = h.div_ceil(tile_rows);
    let area = tile_w * tile_h;

    let clip_limit = if clip.is_finite() {
        Some(((clip * area as f64 / BINS as f64) as usize).max(1))
    } else {
        None
    };
    let lut_scale = (BINS - 1) as f64 / area as f64;

    let mut luts = Vec::with_capacity(tile_rows * tile_cols);
    for tr in 0..tile_rows {
        for tc in 0..tile_cols {
            let mut hist = [0usize; BINS];
            for py in tr * tile_h..(tr + 1) * tile_h {
                let y = reflect101(py, h);
                for px in tc * tile_w..(tc + 1) * tile_w {
                    hist[img.get(reflect101(px, w), y) as usize] += 1;
                }
            }
            if let Some(limit) = clip_limit {
                clip_histogram(&mut hist, limit);
            }
            let mut lut = [0u8; BINS];
            let mut sum = 0usize;
            for (bin, count) in hist.iter().enumerate() {
                sum += count;
                lut[bin] = (sum as f64 * lut_scale).round().min(255.0) as u8;
            }
            luts.push(lut);
        }
    }
    luts
}

fn clip_histogram(hist: &mut [usize; BINS], limit: usize) {
    let mut clipped = 0;
    for count in hist.iter_mut() {
        if *count > limit {
            clipped += *count - limit;
            *count = limit;
        }
    }
    let batch = clipped / BINS;
    let mut residual = clipped - batch * BINS;
    for count in hist.iter_mut() {
        *count += batch;
    }
    if residual > 0 {
        let step = (BINS / residual).max(1);
        let mut bin = 0;
        while bin < BINS && residual > 0 {
            hist[bin] += 1;
            residual -= 1;
            bin += step;
        }
    }
}

#[inline]
fn reflect101(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        2 * (n - 1) - i
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant() {
        let img = GrayImage::filled(64, 48, 128);
        let out = clahe(&img, 2.0, (8, 8)).unwrap();
        let first = out.data()[0];
        assert!(out.data().iter().all(|&v| v == first));
    }

    #[test]
    fn constant_image_with_uneven_tiles_stays_constant() {
        let img = GrayImage::filled(37, 29, 90);
        let out = clahe(&img, 3.0, (4, 5)).unwrap();
        let first = out.data()[0];
        assert!(out.data().iter().all(|&v| v == first));
    }

    #[test]
    fn unclipped_single_tile_is_histogram_equalization() {
        // Brute force: count of pixels <= v, scaled to [0, 255].
        let img = GrayImage::from_fn(23, 17, |x, y| ((x * 37 + y * 11 + x * y) % 97) as u8);
        let n = img.data().len() as f64;
        let expected: Vec<u8> = img
            .data()
            .iter()
            .map(|&v| {
                let rank = img.data().iter().filter(|&&u| u <= v).count() as f64;
                (rank * 255.0 / n).round() as u8
            })
            .collect();
        let out = clahe(&img, f64::INFINITY, (1, 1)).unwrap();
        assert_eq!(out.data(), &expected[..]);
    }

    #[test]
    fn full_ramp_tiles_change_by_at_most_one() {
        // 8x8 grid of 16x16 tiles, each tile a full 0..=255 ramp: uniform
        // histogram with one count per bin, never clipped at limit 2.
        let img = GrayImage::from_fn(128, 128, |x, y| ((y % 16) * 16 + x % 16) as u8);
        let luts = tile_luts(&img, 2.0, (8, 8));
        for lut in &luts {
            for v in 0..BINS {
                let oracle = ((v + 1) as f64 * 255.0 / 256.0).round() as u8;
                assert_eq!(lut[v], oracle);
            }
        }
        let out = clahe(&img, 2.0, (8, 8)).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    #[test]
    fn tile_luts_are_monotone() {
        let img = GrayImage::from_fn(64, 64, |x, y| ((x * x + 3 * y * y + 7 * x * y) % 251) as u8);
        for clip in [1.0, 2.0, 4.0, f64::INFINITY] {
            for lut in tile_luts(&img, clip, (4, 4)) {
                assert!(lut.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn clipping_limits_contrast_gain() {
        // Two-level tile: unclipped equalization stretches it to the extremes,
        // clipping keeps the mapping closer to the identity.
        let img = GrayImage::from_fn(32, 32, |x, _| if x < 16 { 100 } else { 110 });
        let free = clahe(&img, f64::INFINITY, (1, 1)).unwrap();
        let clipped = clahe(&img, 1.0, (1, 1)).unwrap();
        let spread = |g: &GrayImage| g.get(31, 0) as i32 - g.get(0, 0) as i32;
        assert!(spread(&clipped) < spread(&free));
        assert!(spread(&clipped) >= 0);
    }

    #[test]
    fn rejects_image_smaller_than_grid() {
        let img = GrayImage::filled(4, 4, 0);
        assert!(clahe(&img, 2.0, (8, 8)).is_err());
        assert!(clahe(&img, 0.5, (1, 1)).is_err());
        assert!(clahe(&img, 2.0, (0, 1)).is_err());
    }
}
