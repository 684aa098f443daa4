use crate::types::GrayImage;

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
pub(crate) const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const ARC: usize = 9;

/// FAST-9 response at `(x, y)`, or `None` if the pixel is not a corner.
///
/// A corner needs 9 contiguous circle pixels all brighter than `p + t` or
/// all darker than `p - t`. The score is the summed excess over the
/// threshold of the winning polarity. Caller guarantees a 3 px margin.
pub(crate) fn fast9_score(img: &GrayImage, x: usize, y: usize, threshold: u8) -> Option<f32> {
    let p = img.get(x, y) as i32;
    let t = threshold as i32;
    let mut ring = [0i32; 16];
    for (v, (dx, dy)) in ring.iter_mut().zip(CIRCLE) {
        *v = img.get((x as isize + dx) as usize, (y as isize + dy) as usize) as i32;
    }

    // Cheap rejection: any 9-arc covers at least two of the four compass points.
    let compass = [ring[0], ring[4], ring[8], ring[12]];
    let bright = compass.iter().filter(|&&v| v > p + t).count();
    let dark = compass.iter().filter(|&&v| v < p - t).count();
    if bright < 2 && dark < 2 {
        return None;
    }

    let has_arc = |pred: &dyn Fn(i32) -> bool| {
        let mut run = 0;
        for i in 0..16 + ARC - 1 {
            if pred(ring[i % 16]) {
                run += 1;
                if run >= ARC {
                    return true;
                }
            } else {
                run = 0;
            }
        }
        false
    };
    let is_bright = has_arc(&|v| v > p + t);
    let is_dark = !is_bright && has_arc(&|v| v < p - t);
    if !is_bright && !is_dark {
        return None;
    }
    let score: i32 = if is_bright {
        ring.iter().map(|&v| (v - p - t).max(0)).sum()
    } else {
        ring.iter().map(|&v| (p - t - v).max(0)).sum()
    };
    Some(score as f32)
}

/// All FAST-9 corners at least `margin` pixels from every border.
pub(crate) fn fast9_corners(img: &GrayImage, threshold: u8, margin: usize) -> Vec<(usize, usize, f32)> {
    let margin = margin.max(3);
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::new();
    if w <= 2 * margin || h <= 2 * margin {
        return out;
    }
    for y in margin..h - margin {
        for x in margin..w - margin {
            if let Some(score) = fast9_score(img, x, y, threshold) {
                out.push((x, y, score));
            }
        }
    }
    out
}
