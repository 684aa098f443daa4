use crate::types::GrayImage;

/// Fraction of the strongest response a corner must reach.
const QUALITY: f32 = 0.01;

/// Minimum eigenvalue of the 3x3-summed structure tensor (central
/// difference gradients), thresholded relative to the image maximum.
pub(crate) fn shi_tomasi_corners(img: &GrayImage, margin: usize) -> Vec<(usize, usize, f32)> {
    let margin = margin.max(2);
    let (w, h) = (img.width(), img.height());
    if w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }
    let mut gx = vec![0f32; w * h];
    let mut gy = vec![0f32; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            gx[y * w + x] = (img.get(x + 1, y) as f32 - img.get(x - 1, y) as f32) * 0.5;
            gy[y * w + x] = (img.get(x, y + 1) as f32 - img.get(x, y - 1) as f32) * 0.5;
        }
    }
    let mut responses = Vec::new();
    let mut max_response = 0f32;
    for y in margin..h - margin {
        for x in margin..w - margin {
            let (mut a, mut b, mut c) = (0f32, 0f32, 0f32);
            for yy in y - 1..=y + 1 {
                for xx in x - 1..=x + 1 {
                    let (dx, dy) = (gx[yy * w + xx], gy[yy * w + xx]);
                    a += dx * dx;
                    b += dx * dy;
                    c += dy * dy;
                }
            }
            let half_trace = 0.5 * (a + c);
            let lambda = half_trace - ((0.5 * (a - c)).powi(2) + b * b).sqrt();
            if lambda > 0.0 {
                max_response = max_response.max(lambda);
                responses.push((x, y, lambda));
            }
        }
    }
    let floor = (QUALITY * max_response).max(1e-3);
    responses.retain(|&(_, _, r)| r >= floor);
    responses
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_square_corners_not_edges() {
        let img = GrayImage::from_fn(40, 40, |x, y| {
            if (10..30).contains(&x) && (10..30).contains(&y) {
                255
            } else {
                0
            }
        });
        let corners = shi_tomasi_corners(&img, 3);
        let best = corners
            .iter()
            .max_by(|a, b| a.2.total_cmp(&b.2))
            .unwrap();
        let near_corner = [(10, 10), (29, 10), (10, 29), (29, 29)]
            .iter()
            .any(|&(cx, cy)| (best.0 as i32 - cx).abs() <= 1 && (best.1 as i32 - cy).abs() <= 1);
        assert!(near_corner, "{best:?}");
        assert!(shi_tomasi_corners(&GrayImage::filled(30, 30, 9), 3).is_empty());
    }
}
