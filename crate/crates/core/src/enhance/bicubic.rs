use crate::types::GrayImage;

/// Keys cubic convolution kernel with `a = -0.5`.
fn keys(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Tap offsets and weights for output sample `out` of a 2x upsampling.
///
/// The source coordinate is `(out + 0.5) / 2 - 0.5`, so the fractional part
/// is always 0.25 or 0.75 and every weight is an exact dyadic rational.
fn taps(out: usize) -> (isize, [f64; 4]) {
    let k = (out / 2) as isize;
    if out % 2 == 0 {
        (k - 2, [keys(1.75), keys(0.75), keys(0.25), keys(1.25)])
    } else {
        (k - 1, [keys(1.25), keys(0.25), keys(0.75), keys(1.75)])
    }
}

/// 2x bicubic upsampling with replicated borders.
pub fn upsample2(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let (ow, oh) = (2 * w, 2 * h);
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let col_taps: Vec<_> = (0..ow).map(taps).collect();
    let mut horizontal = vec![0.0f64; h * ow];
    for y in 0..h {
        let row = &img.data()[y * w..(y + 1) * w];
        for (x, (start, weights)) in col_taps.iter().enumerate() {
            horizontal[y * ow + x] = weights
                .iter()
                .enumerate()
                .map(|(i, wt)| wt * row[clamp(start + i as isize, w)] as f64)
                .sum();
        }
    }

    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        let (start, weights) = taps(y);
        let rows: [usize; 4] = std::array::from_fn(|i| clamp(start + i as isize, h));
        for x in 0..ow {
            let v: f64 = rows
                .iter()
                .zip(weights)
                .map(|(&r, wt)| wt * horizontal[r * ow + x])
                .sum();
            out.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(ow, oh, out).expect("sized by construction")
}
