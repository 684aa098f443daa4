use crate::error::{Error, Result};
use crate::features::{hamming, Descriptors};

/// Mutual nearest neighbour matching.
///
/// `(i, j)` is returned iff `j` is the nearest `curr` descriptor to
/// `prev[i]` and `i` is the nearest `prev` descriptor to `curr[j]`. Ties go
/// to the lowest index. Distances are Hamming for binary descriptors and
/// Euclidean for real ones. With `max_distance`, pairs farther apart are
/// dropped. Output is sorted by `i`.
pub fn mnn_match(
    prev: &Descriptors,
    curr: &Descriptors,
    max_distance: Option<f64>,
) -> Result<Vec<(usize, usize)>> {
    if prev.is_empty() || curr.is_empty() {
        return Ok(Vec::new());
    }
    let (n, m) = (prev.len(), curr.len());
    // Squared Euclidean preserves the ordering, so only the cutoff needs care.
    let dist: Box<dyn Fn(usize, usize) -> f64> = match (prev, curr) {
        (Descriptors::Binary(a), Descriptors::Binary(b)) => {
            Box::new(move |i, j| hamming(&a[i], &b[j]) as f64)
        }
        (Descriptors::Real { dim: da, .. }, Descriptors::Real { dim: db, .. }) => {
            if da != db {
                return Err(Error::DescriptorMismatch(format!(
                    "real descriptors of length {da} and {db}"
                )));
            }
            Box::new(move |i, j| {
                let (a, b) = (prev.real(i).unwrap(), curr.real(j).unwrap());
                a.iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let d = (*x as f64) - (*y as f64);
                        d * d
                    })
                    .sum()
            })
        }
        _ => {
            return Err(Error::DescriptorMismatch(
                "cannot match binary against real descriptors".into(),
            ))
        }
    };
    let cutoff = max_distance.map(|d| match prev {
        Descriptors::Binary(_) => d,
        Descriptors::Real { .. } => d * d,
    });

    let mut best_for_prev = vec![(f64::INFINITY, usize::MAX); n];
    let mut best_for_curr = vec![(f64::INFINITY, usize::MAX); m];
    for (i, best_i) in best_for_prev.iter_mut().enumerate() {
        for (j, best_j) in best_for_curr.iter_mut().enumerate() {
            let d = dist(i, j);
            if d < best_i.0 {
                *best_i = (d, j);
            }
            if d < best_j.0 {
                *best_j = (d, i);
            }
        }
    }

    Ok(best_for_prev
        .iter()
        .enumerate()
        .filter(|&(i, &(d, j))| {
            j != usize::MAX && best_for_curr[j].1 == i && cutoff.is_none_or(|c| d <= c)
        })
        .map(|(i, &(_, j))| (i, j))
        .collect())
}
