//! Gray-level co-occurrence matrix and its Haralick-style features.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{QuantizedWindow, DIRECTIONS};

/// Symmetric, normalized co-occurrence matrix over `bins x bins` gray levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm<T> {
    pub bins: usize,
    /// Row-major `bins x bins`, sums to 1.
    pub p: Vec<T>,
}

impl<T: Scalar> Glcm<T> {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.p[i * self.bins + j]
    }
}

/// Raw symmetric pair counts accumulated over the first `n_directions` of
/// 0°, 45°, 90°, 135° at distance `offset`. Each in-window pair adds one count
/// at `(a, b)` and one at `(b, a)`.
pub fn glcm_counts(w: &QuantizedWindow, bins: usize, offset: usize, n_directions: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins * bins];
    let d = offset as i64;
    for &(dx, dy) in DIRECTIONS.iter().take(n_directions) {
        for y in 0..w.height as i64 {
            for x in 0..w.width as i64 {
                let (x2, y2) = (x + dx * d, y + dy * d);
                if x2 < 0 || y2 < 0 || x2 >= w.width as i64 || y2 >= w.height as i64 {
                    continue;
                }
                let a = w.at(x as usize, y as usize) as usize;
                let b = w.at(x2 as usize, y2 as usize) as usize;
                counts[a * bins + b] += 1;
                counts[b * bins + a] += 1;
            }
        }
    }
    counts
}

pub fn glcm<T: Scalar>(w: &QuantizedWindow, bins: usize, offset: usize, n_directions: usize) -> Result<Glcm<T>> {
    let counts = glcm_counts(w, bins, offset, n_directions);
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::DegenerateWindow(format!(
            "{}x{} window has no pixel pairs at offset {offset}",
            w.width, w.height
        )));
    }
    let t = T::of(total as f64);
    Ok(Glcm {
        bins,
        p: counts.into_iter().map(|c| T::of(c as f64) / t).collect(),
    })
}

/// Energy, Entropy, Correlation, IDM, Inertia, Cluster Shade, Cluster Prominence.
///
/// Entropy uses base 2 with `0 log 0 = 0`; Correlation is 0 when either
/// marginal standard deviation vanishes.
pub fn glcm_features<T: Scalar>(m: &Glcm<T>) -> [T; 7] {
    let n = m.bins;
    let idx = |i: usize| T::of(i as f64);

    let mut mu_i = T::zero();
    let mut mu_j = T::zero();
    for i in 0..n {
        for j in 0..n {
            let p = m.at(i, j);
            mu_i = mu_i + idx(i) * p;
            mu_j = mu_j + idx(j) * p;
        }
    }

    let mut energy = T::zero();
    let mut entropy = T::zero();
    let mut var_i = T::zero();
    let mut var_j = T::zero();
    let mut cov = T::zero();
    let mut idm = T::zero();
    let mut inertia = T::zero();
    let mut shade = T::zero();
    let mut prominence = T::zero();
    for i in 0..n {
        for j in 0..n {
            let p = m.at(i, j);
            if p == T::zero() {
                continue;
            }
            let (di, dj) = (idx(i) - mu_i, idx(j) - mu_j);
            let diff = idx(i) - idx(j);
            let s = di + dj;
            let s2 = s * s;
            energy = energy + p * p;
            entropy = entropy - p * p.log2();
            var_i = var_i + di * di * p;
            var_j = var_j + dj * dj * p;
            cov = cov + di * dj * p;
            idm = idm + p / (T::one() + diff * diff);
            inertia = inertia + diff * diff * p;
            shade = shade + s2 * s * p;
            prominence = prominence + s2 * s2 * p;
        }
    }
    let sd = (var_i * var_j).sqrt();
    let correlation = if sd > T::zero() { cov / sd } else { T::zero() };
    [energy, entropy, correlation, idm, inertia, shade, prominence]
}
