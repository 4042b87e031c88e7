//! Stage one: automatic seed selection and fuzzy-connectedness flood.
//!
//! The connectivity strength of a voxel is the best path bottleneck from any
//! seed: the maximum over paths of the minimum pairwise affinity along the
//! path. It is computed with a best-first propagation over face neighbours,
//! which settles voxels in non-increasing strength order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Side};
use crate::scalar::Scalar;
use crate::volume::{Dims, LabelMask, Volume};

/// Parenchyma mean used by the affinity (HU).
pub const DEFAULT_MEAN: f64 = -550.0;
/// Parenchyma standard deviation used by the affinity (HU).
pub const DEFAULT_SIGMA: f64 = 150.0;
pub const DEFAULT_THETA: f64 = 0.5;
/// Number of random 3x3x3 candidate windows sampled per lateral half.
pub const DEFAULT_SEED_CANDIDATES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityParams<T> {
    pub mean: T,
    pub sigma: T,
    pub theta: T,
}

impl<T: Scalar> Default for AffinityParams<T> {
    fn default() -> Self {
        Self {
            mean: T::of(DEFAULT_MEAN),
            sigma: T::of(DEFAULT_SIGMA),
            theta: T::of(DEFAULT_THETA),
        }
    }
}

impl<T: Scalar> AffinityParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > T::zero() && self.sigma.is_finite()) {
            return Err(Error::param("fc-sigma", format!("must be > 0, got {}", self.sigma)));
        }
        if !self.mean.is_finite() {
            return Err(Error::param("fc-mean", "must be finite"));
        }
        check_theta(self.theta)
    }

    /// Gaussian in the deviation of the pair mean from the parenchyma mean.
    #[inline]
    pub fn affinity(&self, a: T, b: T) -> T {
        let two = T::of(2.0);
        let d = (a + b) / two - self.mean;
        (-(d * d) / (two * self.sigma * self.sigma)).exp()
    }
}

fn check_theta<T: Scalar>(theta: T) -> Result<()> {
    if theta > T::zero() && theta <= T::one() {
        Ok(())
    } else {
        Err(Error::param("fc-theta", format!("must lie in (0, 1], got {theta}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPair {
    pub left: [usize; 3],
    pub right: [usize; 3],
}

impl SeedPair {
    pub fn as_slice(&self) -> [[usize; 3]; 2] {
        [self.left, self.right]
    }
}

/// Per-voxel connectivity strength in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMap<T> {
    dims: Dims,
    strength: Vec<T>,
}

impl<T: Scalar> ConnectivityMap<T> {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn strength(&self) -> &[T] {
        &self.strength
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> T {
        self.strength[self.dims.index(x, y, z)]
    }
}

/// Picks one seed per lateral half from randomly sampled 3x3x3 windows.
///
/// Candidate window centres are band-mask voxels whose full window lies in
/// bounds. Up to `n_candidates` of them are drawn per half, and the seed is the
/// lowest-HU band voxel of that half found inside any drawn window (ties go to
/// the lowest linear index).
pub fn select_seeds<T: Scalar>(
    vol: &Volume<T>,
    band_mask: &LabelMask,
    rng_seed: u64,
    n_candidates: usize,
) -> Result<SeedPair> {
    let dims = vol.dims();
    if band_mask.dims() != dims {
        return Err(Error::Input(format!(
            "band mask dims {} differ from volume dims {dims}",
            band_mask.dims()
        )));
    }
    if n_candidates == 0 {
        return Err(Error::param("seed-candidates", "must be >= 1"));
    }
    let split = dims.nx / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let mut pick = |side: Side| -> Result<[usize; 3]> {
        let in_half = |x: usize| match side {
            Side::Left => x < split,
            Side::Right => x >= split,
        };
        let interior = |c: usize, n: usize| c >= 1 && c + 1 < n;
        let candidates: Vec<usize> = band_mask
            .indices()
            .into_iter()
            .filter(|&i| {
                let [x, y, z] = dims.coords(i);
                in_half(x) && interior(x, dims.nx) && interior(y, dims.ny) && interior(z, dims.nz)
            })
            .collect();
        let chosen: Vec<usize> = candidates.choose_multiple(&mut rng, n_candidates).copied().collect();

        let mut best: Option<(T, usize)> = None;
        for c in chosen {
            let [cx, cy, cz] = dims.coords(c);
            for z in cz - 1..=cz + 1 {
                for y in cy - 1..=cy + 1 {
                    for x in cx - 1..=cx + 1 {
                        let i = dims.index(x, y, z);
                        if !band_mask.is_set(i) || !in_half(x) {
                            continue;
                        }
                        let v = vol.data()[i];
                        let better = match best {
                            None => true,
                            Some((bv, bi)) => v < bv || (v == bv && i < bi),
                        };
                        if better {
                            best = Some((v, i));
                        }
                    }
                }
            }
        }
        best.map(|(_, i)| dims.coords(i)).ok_or(Error::SeedFailure { side })
    };

    let left = pick(Side::Left)?;
    let right = pick(Side::Right)?;
    Ok(SeedPair { left, right })
}

struct Entry<T> {
    strength: T,
    idx: usize,
}

impl<T: Scalar> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Entry<T> {}

impl<T: Scalar> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Entry<T> {
    // max-heap on strength; lower index first among equals
    fn cmp(&self, other: &Self) -> Ordering {
        self.strength
            .partial_cmp(&other.strength)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Max-min connectivity from a set of seed voxels.
pub fn compute_connectivity_from<T: Scalar>(
    vol: &Volume<T>,
    seeds: &[[usize; 3]],
    params: &AffinityParams<T>,
) -> Result<ConnectivityMap<T>> {
    let dims = vol.dims();
    let data = vol.data();
    let mut strength = vec![T::zero(); dims.len()];
    let mut heap = BinaryHeap::new();
    for &[x, y, z] in seeds {
        if x >= dims.nx || y >= dims.ny || z >= dims.nz {
            return Err(Error::Input(format!("seed ({x}, {y}, {z}) outside volume {dims}")));
        }
        let i = dims.index(x, y, z);
        strength[i] = T::one();
        heap.push(Entry {
            strength: T::one(),
            idx: i,
        });
    }

    while let Some(Entry { strength: s, idx }) = heap.pop() {
        if s < strength[idx] {
            continue;
        }
        for n in dims.face_neighbors(idx) {
            let cand = s.min(params.affinity(data[idx], data[n]));
            if cand > strength[n] {
                strength[n] = cand;
                heap.push(Entry { strength: cand, idx: n });
            }
        }
    }
    Ok(ConnectivityMap { dims, strength })
}

pub fn compute_connectivity<T: Scalar>(
    vol: &Volume<T>,
    seeds: &SeedPair,
    params: &AffinityParams<T>,
) -> Result<ConnectivityMap<T>> {
    compute_connectivity_from(vol, &seeds.as_slice(), params)
}

/// Label 1 iff strength >= theta.
pub fn binarize<T: Scalar>(cmap: &ConnectivityMap<T>, theta: T) -> Result<LabelMask> {
    check_theta(theta)?;
    Ok(LabelMask::from_fn(cmap.dims, |i| cmap.strength[i] >= theta))
}
