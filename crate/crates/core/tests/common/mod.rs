//! Independent reference implementations used by the integration tests.
//! Everything here is written the slow, obvious way on purpose.

#![allow(dead_code)]

use std::collections::VecDeque;

use lungseg::config::TrainingParams;
use lungseg::evaluation::{phantom_training_records, Blob, BlobTexture, Ellipsoid, PhantomSpec};
use lungseg::forest::Class;
use lungseg::forest::{train, ForestModel, ForestParams, TrainingSet};
use lungseg::pipeline::PipelineConfig;
use lungseg::slic::NONE;
use lungseg::{Dims, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Mixed tolerance: absolute near zero, relative for large magnitudes.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(b.abs())
}

// ---------------------------------------------------------------- FC

pub fn affinity(a: f64, b: f64, mean: f64, sigma: f64) -> f64 {
    let d = 0.5 * (a + b) - mean;
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

fn grid_neighbours(d: Dims, i: usize) -> Vec<usize> {
    let x = i % d.nx;
    let y = (i / d.nx) % d.ny;
    let z = i / (d.nx * d.ny);
    let mut out = Vec::new();
    for (dx, dy, dz) in [
        (-1i64, 0i64, 0i64),
        (1, 0, 0),
        (0, -1, 0),
        (0, 1, 0),
        (0, 0, -1),
        (0, 0, 1),
    ] {
        let (a, b, c) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
        if a >= 0 && b >= 0 && c >= 0 && (a as usize) < d.nx && (b as usize) < d.ny && (c as usize) < d.nz {
            out.push(a as usize + d.nx * (b as usize + d.ny * c as usize));
        }
    }
    out
}

/// Max over every simple path from any seed of the path's weakest affinity,
/// by explicit enumeration of all simple paths. Exponential: small grids only.
pub fn fc_by_path_enumeration(d: Dims, v: &[f64], seeds: &[usize], mean: f64, sigma: f64) -> Vec<f64> {
    fn walk(
        d: Dims,
        v: &[f64],
        at: usize,
        weakest: f64,
        on_path: &mut [bool],
        best: &mut [f64],
        mean: f64,
        sigma: f64,
    ) {
        if weakest > best[at] {
            best[at] = weakest;
        }
        for nb in grid_neighbours(d, at) {
            if on_path[nb] {
                continue;
            }
            on_path[nb] = true;
            let w = weakest.min(affinity(v[at], v[nb], mean, sigma));
            walk(d, v, nb, w, on_path, best, mean, sigma);
            on_path[nb] = false;
        }
    }
    let mut best = vec![0.0; v.len()];
    for &s in seeds {
        let mut on_path = vec![false; v.len()];
        on_path[s] = true;
        walk(d, v, s, 1.0, &mut on_path, &mut best, mean, sigma);
    }
    best
}

/// Same quantity through the bottleneck characterisation: a voxel's strength
/// is the largest edge weight `w` such that it is joined to a seed using only
/// edges of weight `>= w` (1 for the seeds themselves). Every distinct edge
/// weight is tried as a cutoff, with a plain BFS per cutoff.
pub fn fc_by_threshold_sweep(d: Dims, v: &[f64], seeds: &[usize], mean: f64, sigma: f64) -> Vec<f64> {
    let n = v.len();
    let mut weights: Vec<f64> = (0..n)
        .flat_map(|i| grid_neighbours(d, i).into_iter().map(move |j| (i, j)))
        .map(|(i, j)| affinity(v[i], v[j], mean, sigma))
        .collect();
    weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
    weights.dedup();
    let mut best = vec![0.0; n];
    for &s in seeds {
        best[s] = 1.0;
    }
    for &w in &weights {
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
        for &s in seeds {
            seen[s] = true;
        }
        while let Some(i) = queue.pop_front() {
            if w > best[i] {
                best[i] = w;
            }
            for j in grid_neighbours(d, i) {
                if !seen[j] && affinity(v[i], v[j], mean, sigma) >= w {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    best
}

// ---------------------------------------------------------------- texture

pub const HU_LO: f64 = -1024.0;
pub const HU_HI: f64 = 3071.0;

/// Bin = number of interior bin edges at or below the value.
pub fn bin_of(v: f64, n: usize) -> usize {
    let width = (HU_HI - HU_LO) / n as f64;
    (1..n).filter(|&b| v >= HU_LO + b as f64 * width).count()
}

/// 0°, 45°, 90°, 135° with y pointing down the window rows.
pub const DIRS: [(i64, i64); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

/// Symmetric co-occurrence counts from every ordered pixel pair of the window.
pub fn glcm_oracle(bins_img: &[usize], side: usize, n_bins: usize, offset: i64, n_dirs: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n_bins]; n_bins];
    let px: Vec<(i64, i64)> = (0..side * side)
        .map(|k| ((k % side) as i64, (k / side) as i64))
        .collect();
    for (p, &(x1, y1)) in px.iter().enumerate() {
        for (q, &(x2, y2)) in px.iter().enumerate() {
            for &(dx, dy) in &DIRS[..n_dirs] {
                let (ex, ey) = (x2 - x1, y2 - y1);
                if (ex, ey) == (dx * offset, dy * offset) || (ex, ey) == (-dx * offset, -dy * offset) {
                    m[bins_img[p]][bins_img[q]] += 1.0;
                }
            }
        }
    }
    m
}

pub fn glcm_features_oracle(counts: &[Vec<f64>]) -> [f64; 7] {
    let n = counts.len();
    let total: f64 = counts.iter().flatten().sum();
    let p: Vec<Vec<f64>> = counts.iter().map(|r| r.iter().map(|c| c / total).collect()).collect();
    let row: Vec<f64> = (0..n).map(|i| (0..n).map(|j| p[i][j]).sum()).collect();
    let col: Vec<f64> = (0..n).map(|j| (0..n).map(|i| p[i][j]).sum()).collect();
    let mu_i: f64 = (0..n).map(|i| i as f64 * row[i]).sum();
    let mu_j: f64 = (0..n).map(|j| j as f64 * col[j]).sum();
    let sd_i = (0..n).map(|i| (i as f64 - mu_i).powi(2) * row[i]).sum::<f64>().sqrt();
    let sd_j = (0..n).map(|j| (j as f64 - mu_j).powi(2) * col[j]).sum::<f64>().sqrt();
    let mut f = [0.0; 7];
    for i in 0..n {
        for j in 0..n {
            let q = p[i][j];
            let (fi, fj) = (i as f64, j as f64);
            f[0] += q * q;
            if q > 0.0 {
                f[1] -= q * q.log2();
            }
            f[2] += (fi - mu_i) * (fj - mu_j) * q;
            f[3] += q / (1.0 + (fi - fj).powi(2));
            f[4] += (fi - fj).powi(2) * q;
            f[5] += (fi + fj - mu_i - mu_j).powi(3) * q;
            f[6] += (fi + fj - mu_i - mu_j).powi(4) * q;
        }
    }
    f[2] = if sd_i * sd_j == 0.0 { 0.0 } else { f[2] / (sd_i * sd_j) };
    f
}

/// Run counts `r[level][length]` (length index = run length) found by testing
/// every (start pixel, length) pair for a maximal run.
pub fn glrlm_oracle(levels_img: &[usize], side: usize, n_levels: usize, n_dirs: usize) -> Vec<Vec<f64>> {
    let s = side as i64;
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < s && y < s;
    let at = |x: i64, y: i64| levels_img[(x + s * y) as usize];
    let mut r = vec![vec![0.0; side + 1]; n_levels];
    for &(dx, dy) in &DIRS[..n_dirs] {
        for y in 0..s {
            for x in 0..s {
                let g = at(x, y);
                for len in 1..=s {
                    let uniform = (0..len).all(|k| inside(x + k * dx, y + k * dy) && at(x + k * dx, y + k * dy) == g);
                    let open_before = !inside(x - dx, y - dy) || at(x - dx, y - dy) != g;
                    let (ex, ey) = (x + len * dx, y + len * dy);
                    let open_after = !inside(ex, ey) || at(ex, ey) != g;
                    if uniform && open_before && open_after {
                        r[g][len as usize] += 1.0;
                    }
                }
            }
        }
    }
    r
}

pub fn glrlm_features_oracle(r: &[Vec<f64>], n_pixels: f64) -> [f64; 11] {
    let nr: f64 = r.iter().flatten().sum();
    let mut f = [0.0; 11];
    for (g0, row) in r.iter().enumerate() {
        let g = (g0 + 1) as f64;
        for (l, &c) in row.iter().enumerate().skip(1) {
            let l = l as f64;
            f[0] += c / (l * l);
            f[1] += c * l * l;
            f[5] += c / (g * g);
            f[6] += c * g * g;
            f[7] += c / (g * g * l * l);
            f[8] += c * g * g / (l * l);
            f[9] += c * l * l / (g * g);
            f[10] += c * g * g * l * l;
        }
    }
    f[2] = r.iter().map(|row| row.iter().sum::<f64>().powi(2)).sum();
    let max_len = r[0].len();
    f[3] = (1..max_len)
        .map(|l| r.iter().map(|row| row[l]).sum::<f64>().powi(2))
        .sum();
    for (k, v) in f.iter_mut().enumerate() {
        if k != 4 {
            *v /= nr;
        }
    }
    f[4] = nr / n_pixels;
    f
}

pub fn histogram_oracle(v: &[f64]) -> [f64; 6] {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let moment = |k: i32| v.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
    let var = moment(2);
    let (skew, kurt) = if var == 0.0 {
        (0.0, 0.0)
    } else {
        (moment(3) / var.powf(1.5), moment(4) / (var * var))
    };
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    [mean, var, skew, kurt, min, max]
}

/// All 24 features of a square window of raw HU values with the default settings.
pub fn descriptor_oracle(values: &[f64], side: usize) -> [f64; 24] {
    let b16: Vec<usize> = values.iter().map(|&v| bin_of(v, 16)).collect();
    let b8: Vec<usize> = values.iter().map(|&v| bin_of(v, 8)).collect();
    let g = glcm_features_oracle(&glcm_oracle(&b16, side, 16, 2, 4));
    let r = glrlm_features_oracle(&glrlm_oracle(&b8, side, 8, 4), 4.0 * values.len() as f64);
    let h = histogram_oracle(values);
    let mut out = [0.0; 24];
    out[..7].copy_from_slice(&g);
    out[7..18].copy_from_slice(&r);
    out[18..].copy_from_slice(&h);
    out
}

// ---------------------------------------------------------------- SLIC

/// Every label's voxels form one face-connected piece (BFS per label).
pub fn labels_are_connected(d: Dims, labels: &[u32]) -> bool {
    let mut seen = vec![false; labels.len()];
    let mut started = std::collections::HashSet::new();
    for s in 0..labels.len() {
        if labels[s] == NONE || seen[s] {
            continue;
        }
        if !started.insert(labels[s]) {
            return false;
        }
        let mut q = VecDeque::from([s]);
        seen[s] = true;
        while let Some(i) = q.pop_front() {
            for j in grid_neighbours(d, i) {
                if !seen[j] && labels[j] == labels[s] {
                    seen[j] = true;
                    q.push_back(j);
                }
            }
        }
    }
    true
}

fn on_boundary(d: Dims, labels: &[u32], i: usize) -> bool {
    labels[i] != NONE
        && grid_neighbours(d, i)
            .into_iter()
            .any(|j| labels[j] != NONE && labels[j] != labels[i])
}

/// Share of truth-boundary voxels with a supervoxel-boundary voxel inside the
/// surrounding cube of half-side `tol`.
pub fn boundary_recall_oracle(d: Dims, truth: &[u32], sv: &[u32], tol: i64) -> f64 {
    let coords = |i: usize| {
        (
            (i % d.nx) as i64,
            ((i / d.nx) % d.ny) as i64,
            (i / (d.nx * d.ny)) as i64,
        )
    };
    let sv_b: Vec<usize> = (0..sv.len()).filter(|&i| on_boundary(d, sv, i)).collect();
    let mut sv_mark = vec![false; sv.len()];
    for &i in &sv_b {
        sv_mark[i] = true;
    }
    let truth_in: Vec<u32> = truth
        .iter()
        .zip(sv)
        .map(|(&t, &s)| if s == NONE { NONE } else { t })
        .collect();
    let tb: Vec<usize> = (0..truth.len()).filter(|&i| on_boundary(d, &truth_in, i)).collect();
    if tb.is_empty() {
        return 1.0;
    }
    let mut hits = 0;
    for &i in &tb {
        let (x, y, z) = coords(i);
        let mut found = false;
        for zz in z - tol..=z + tol {
            for yy in y - tol..=y + tol {
                for xx in x - tol..=x + tol {
                    if xx >= 0
                        && yy >= 0
                        && zz >= 0
                        && (xx as usize) < d.nx
                        && (yy as usize) < d.ny
                        && (zz as usize) < d.nz
                    {
                        found |= sv_mark[xx as usize + d.nx * (yy as usize + d.ny * zz as usize)];
                    }
                }
            }
        }
        hits += found as usize;
    }
    hits as f64 / tb.len() as f64
}

// ---------------------------------------------------------------- pipeline

/// Default phantom geometry with one consolidation blob against the outer wall of the left lung.
pub fn default_phantom_with_blob() -> PhantomSpec {
    let mut s = PhantomSpec::default();
    s.blobs.push(Blob {
        texture: BlobTexture::Consolidation,
        shape: Ellipsoid {
            center: [22.0, 47.5, 31.5],
            radii: [7.0, 7.0, 7.0],
        },
    });
    s
}

/// Forest trained with every default: phantom training keypoints and the
/// standard forest parameters.
pub fn default_model() -> ForestModel<f64> {
    let t = TrainingParams::default();
    let recs =
        phantom_training_records(t.phantoms, t.seed, t.positives, t.negatives, &PipelineConfig::default()).unwrap();
    let data = TrainingSet::from_records(&recs).unwrap();
    train(&data, &ForestParams::default()).unwrap()
}

pub fn dice_oracle(a: &[u8], b: &[u8]) -> f64 {
    let na = a.iter().filter(|&&v| v != 0).count();
    let nb = b.iter().filter(|&&v| v != 0).count();
    if na + nb == 0 {
        return 1.0;
    }
    let both = a.iter().zip(b).filter(|(&x, &y)| x != 0 && y != 0).count();
    2.0 * both as f64 / (na + nb) as f64
}

// ---------------------------------------------------------------- generators

pub fn random_fc_case(rng: &mut ChaCha8Rng, max_voxels: usize) -> (Dims, Vec<f64>, Vec<usize>) {
    loop {
        let d = Dims::new(
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(1..=4),
        );
        if d.len() > max_voxels {
            continue;
        }
        // a few plateaus plus noise, so ties and walls both occur
        let levels = [-550.0, -700.0, -300.0, 40.0, 900.0];
        let v: Vec<f64> = (0..d.len())
            .map(|_| {
                if rng.random_bool(0.5) {
                    levels[rng.random_range(0..levels.len())]
                } else {
                    rng.random_range(-1024.0..1200.0f64).round()
                }
            })
            .collect();
        let n_seeds = rng.random_range(1..=2).min(d.len());
        let seeds = (0..n_seeds).map(|_| rng.random_range(0..d.len())).collect();
        return (d, v, seeds);
    }
}

/// Integer HU windows: half drawn from a few plateaus (long runs), half uniform.
pub fn random_window(rng: &mut ChaCha8Rng, side: usize) -> Vec<f64> {
    let palette: Vec<f64> = (0..rng.random_range(1..=4))
        .map(|_| rng.random_range(-1024..=3071) as f64)
        .collect();
    let smooth = rng.random_bool(0.5);
    (0..side * side)
        .map(|_| {
            if smooth {
                palette[rng.random_range(0..palette.len())]
            } else {
                rng.random_range(-1100..=3200) as f64
            }
        })
        .collect()
}

/// Sphere of -100 HU in a -900 HU block, Gaussian noise, labels 1 inside / 0 outside.
pub fn two_region(d: Dims, noise: f64, seed: u64) -> (Volume<f64>, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, noise).unwrap();
    let c = [d.nx as f64 / 2.0 - 3.0, d.ny as f64 / 2.0 + 2.0, d.nz as f64 / 2.0];
    let r = d.nx.min(d.ny).min(d.nz) as f64 * 0.35;
    let mut truth = Vec::with_capacity(d.len());
    let mut v = Vec::with_capacity(d.len());
    for i in 0..d.len() {
        let [x, y, z] = d.coords(i);
        let (dx, dy, dz) = (x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]);
        let inside = dx * dx + dy * dy + dz * dz <= r * r;
        truth.push(inside as u32);
        v.push(if inside { -100.0 } else { -900.0 } + n.sample(&mut rng));
    }
    (Volume::from_hu(d, [1.0; 3], v).unwrap(), truth)
}

/// Descriptor length.
pub const FEATURES: usize = 24;

/// Two isotropic unit-variance Gaussian clusters in `FEATURES` dimensions whose means
/// are `sep` apart along a random unit direction.
pub fn clusters(per_class: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<Class>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = (0..FEATURES).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
    let offset: Vec<f64> = dir.iter().map(|v| v / norm * sep).collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for k in 0..2 * per_class {
        let class = if k % 2 == 0 {
            Class::NonPathological
        } else {
            Class::Pathological
        };
        let shift = if class == Class::Pathological { 1.0 } else { 0.0 };
        x.push((0..FEATURES).map(|j| { let z: f64 = StandardNormal.sample(&mut rng); z } + shift * offset[j]).collect::<Vec<f64>>());
        y.push(class);
    }
    (x, y, offset)
}
