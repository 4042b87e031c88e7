//! Gray-level run-length matrix and the eleven Galloway/Chu/Dasarathy features.

use crate::scalar::Scalar;

use super::{QuantizedWindow, DIRECTIONS};

/// Run counts indexed by `(level, length - 1)`, accumulated over directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLengthMatrix {
    pub levels: usize,
    pub max_run: usize,
    pub counts: Vec<u64>,
}

impl RunLengthMatrix {
    #[inline]
    pub fn at(&self, level: usize, length: usize) -> u64 {
        self.counts[level * self.max_run + length - 1]
    }

    pub fn total_runs(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum of run lengths, i.e. the number of voxels covered by all runs.
    pub fn total_run_voxels(&self) -> u64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(k, &c)| c * (k % self.max_run + 1) as u64)
            .sum()
    }
}

/// Maximal runs of equal level along the first `n_directions` of 0°, 45°, 90°, 135°.
/// Run lengths are capped at the longer window side.
pub fn glrlm(w: &QuantizedWindow, levels: usize, n_directions: usize) -> RunLengthMatrix {
    let max_run = w.width.max(w.height);
    let mut counts = vec![0u64; levels * max_run];
    let (wd, ht) = (w.width as i64, w.height as i64);
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < wd && y < ht;

    for &(dx, dy) in DIRECTIONS.iter().take(n_directions) {
        for y in 0..ht {
            for x in 0..wd {
                // a run starts where the previous pixel along the direction differs or is outside
                let level = w.at(x as usize, y as usize);
                let (px, py) = (x - dx, y - dy);
                if inside(px, py) && w.at(px as usize, py as usize) == level {
                    continue;
                }
                let mut len = 1;
                let (mut cx, mut cy) = (x + dx, y + dy);
                while inside(cx, cy) && w.at(cx as usize, cy as usize) == level {
                    len += 1;
                    cx += dx;
                    cy += dy;
                }
                counts[level as usize * max_run + len.min(max_run) - 1] += 1;
            }
        }
    }
    RunLengthMatrix {
        levels,
        max_run,
        counts,
    }
}

/// SRE, LRE, GLN, RLN, RP, LGRE, HGRE, SRLGE, SRHGE, LRLGE, LRHGE.
///
/// Gray levels enter the emphases 1-based; `RP` divides the run count by the
/// number of voxels the runs cover.
pub fn glrlm_features<T: Scalar>(r: &RunLengthMatrix) -> [T; 11] {
    let n_runs = r.total_runs() as f64;
    let n_vox = r.total_run_voxels() as f64;
    let mut acc = [0f64; 11];
    let mut per_level = vec![0f64; r.levels];
    let mut per_length = vec![0f64; r.max_run];
    for g in 0..r.levels {
        let gf = (g + 1) as f64;
        let g2 = gf * gf;
        for l in 1..=r.max_run {
            let c = r.at(g, l) as f64;
            if c == 0.0 {
                continue;
            }
            let l2 = (l * l) as f64;
            per_level[g] += c;
            per_length[l - 1] += c;
            acc[0] += c / l2;
            acc[1] += c * l2;
            acc[5] += c / g2;
            acc[6] += c * g2;
            acc[7] += c / (g2 * l2);
            acc[8] += c * g2 / l2;
            acc[9] += c * l2 / g2;
            acc[10] += c * g2 * l2;
        }
    }
    acc[2] = per_level.iter().map(|v| v * v).sum();
    acc[3] = per_length.iter().map(|v| v * v).sum();
    let mut out = [T::zero(); 11];
    for (k, v) in acc.iter().enumerate() {
        out[k] = if k == 4 {
            T::of(n_runs / n_vox)
        } else {
            T::of(v / n_runs)
        };
    }
    out
}
