//! Grayscale 3D SLIC supervoxels restricted to a region mask.
//!
//! Cluster centres live in the joint `[v, x, y, z]` space. Each iteration
//! assigns every region voxel to the closest centre among those whose
//! `2S x 2S x 2S` window covers it (plus the centre it held in the previous
//! iteration), then moves every centre to the mean of its members. After
//! convergence a post-pass makes every supervoxel 6-connected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volume::{Dims, LabelMask, Volume};

/// Assignment value for voxels outside the region.
pub const NONE: u32 = u32::MAX;

pub const DEFAULT_COMPACTNESS: f64 = 10.0;
pub const DEFAULT_MAX_ITERS: usize = 10;
pub const DEFAULT_TOL: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterCenter<T> {
    pub v: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> ClusterCenter<T> {
    fn displacement_sq(&self, other: &Self) -> T {
        let d = [self.v - other.v, self.x - other.x, self.y - other.y, self.z - other.z];
        d.iter().map(|&c| c * c).sum()
    }

    fn spatial_sq(&self, p: [usize; 3]) -> T {
        let dx = self.x - T::of(p[0] as f64);
        let dy = self.y - T::of(p[1] as f64);
        let dz = self.z - T::of(p[2] as f64);
        dx * dx + dy * dy + dz * dz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams<T> {
    pub k: usize,
    /// Intensity-vs-space weighting `m_c`, in HU.
    pub compactness: T,
    pub max_iters: usize,
    pub tol: T,
}

impl<T: Scalar> SlicParams<T> {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            compactness: T::of(DEFAULT_COMPACTNESS),
            max_iters: DEFAULT_MAX_ITERS,
            tol: T::of(DEFAULT_TOL),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("slic-k", "must be >= 1"));
        }
        if !(self.compactness >= T::zero() && self.compactness.is_finite()) {
            return Err(Error::param(
                "slic-compactness",
                format!("must be finite and >= 0, got {}", self.compactness),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::param("slic-max-iters", "must be >= 1"));
        }
        if !(self.tol >= T::zero()) {
            return Err(Error::param("slic-tol", format!("must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlicDiagnostics {
    pub iterations: usize,
    /// Centre displacement norm after each update.
    pub residuals: Vec<f64>,
    /// Mean squared assignment distance of each assignment step.
    pub energies: Vec<f64>,
    /// Voxels no centre window covered, assigned to the globally nearest centre.
    pub uncovered: usize,
    /// Disconnected fragments relabelled to a neighbouring supervoxel.
    pub fragments_merged: usize,
    /// Region components that needed a supervoxel of their own.
    pub clusters_added: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervoxelMap<T> {
    pub dims: Dims,
    /// Cluster id per voxel, [`NONE`] outside the region.
    pub assignment: Vec<u32>,
    pub centers: Vec<ClusterCenter<T>>,
    pub k_requested: usize,
    /// Grid interval `S` in voxels.
    pub interval: usize,
    pub diagnostics: SlicDiagnostics,
}

impl<T: Scalar> SupervoxelMap<T> {
    pub fn k_actual(&self) -> usize {
        self.centers.len()
    }

    /// Member count per cluster id.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.centers.len()];
        for &a in &self.assignment {
            if a != NONE {
                s[a as usize] += 1;
            }
        }
        s
    }

    /// Labels for export: cluster id, or `-1` outside the region.
    pub fn label_grid(&self) -> Vec<i32> {
        self.assignment
            .iter()
            .map(|&a| if a == NONE { -1 } else { a as i32 })
            .collect()
    }
}

/// Grid interval for `n_vox` region voxels split into `k` supervoxels.
pub fn grid_interval(n_vox: usize, k: usize) -> usize {
    ((n_vox as f64 / k as f64).cbrt().round() as usize).max(1)
}

fn check_inputs<T: Scalar>(vol: &Volume<T>, region: &LabelMask, k: usize) -> Result<usize> {
    if region.dims() != vol.dims() {
        return Err(Error::Input(format!(
            "region dims {} differ from volume dims {}",
            region.dims(),
            vol.dims()
        )));
    }
    let n = region.count();
    if n == 0 {
        return Err(Error::Input("SLIC region is empty".into()));
    }
    if k == 0 || k > n {
        return Err(Error::param(
            "slic-k",
            format!("must lie in 1..={n} (region voxel count), got {k}"),
        ));
    }
    Ok(n)
}

fn bbox(region: &LabelMask) -> ([usize; 3], [usize; 3]) {
    let dims = region.dims();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for i in region.indices() {
        let c = dims.coords(i);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    (lo, hi)
}

/// Places up to `k` centres on a regular grid of interval `S` over the region's bounding box.
///
/// Grid points whose nearest voxel is outside the region snap to the closest
/// region voxel within `S / 2`, or are dropped. If more than `k` points survive,
/// an evenly strided subset of `k` is kept.
pub fn init_centers<T: Scalar>(
    vol: &Volume<T>,
    region: &LabelMask,
    k: usize,
) -> Result<(Vec<ClusterCenter<T>>, usize)> {
    let n = check_inputs(vol, region, k)?;
    let dims = vol.dims();
    let s = grid_interval(n, k);
    let (lo, hi) = bbox(region);
    let sf = s as f64;

    let axis_points = |a: usize| -> Vec<f64> {
        let mut pts = Vec::new();
        let mut i = 0;
        loop {
            let p = lo[a] as f64 + (i as f64 + 0.5) * sf - 0.5;
            if p > hi[a] as f64 {
                break;
            }
            pts.push(p);
            i += 1;
        }
        if pts.is_empty() {
            pts.push((lo[a] + hi[a]) as f64 / 2.0);
        }
        pts
    };
    let (px, py, pz) = (axis_points(0), axis_points(1), axis_points(2));

    let half = (sf / 2.0).ceil() as i64;
    let mut centers = Vec::new();
    for &z in &pz {
        for &y in &py {
            for &x in &px {
                let near = [x, y, z].map(|c| (c + 0.5).floor() as i64);
                let snapped = match dims.checked_index(near[0], near[1], near[2]) {
                    Some(i) if region.is_set(i) => Some(([x, y, z], i)),
                    _ => {
                        let mut best: Option<(f64, usize)> = None;
                        for dz in -half..=half {
                            for dy in -half..=half {
                                for dx in -half..=half {
                                    let (qx, qy, qz) = (near[0] + dx, near[1] + dy, near[2] + dz);
                                    let Some(i) = dims.checked_index(qx, qy, qz) else {
                                        continue;
                                    };
                                    if !region.is_set(i) {
                                        continue;
                                    }
                                    let d2 =
                                        (qx as f64 - x).powi(2) + (qy as f64 - y).powi(2) + (qz as f64 - z).powi(2);
                                    if d2 <= (sf / 2.0).powi(2)
                                        && best.is_none_or(|(bd, bi)| d2 < bd || (d2 == bd && i < bi))
                                    {
                                        best = Some((d2, i));
                                    }
                                }
                            }
                        }
                        best.map(|(_, i)| {
                            let c = dims.coords(i);
                            ([c[0] as f64, c[1] as f64, c[2] as f64], i)
                        })
                    }
                };
                if let Some((p, i)) = snapped {
                    centers.push(ClusterCenter {
                        v: vol.data()[i],
                        x: T::of(p[0]),
                        y: T::of(p[1]),
                        z: T::of(p[2]),
                    });
                }
            }
        }
    }

    if centers.is_empty() {
        // region too sparse for the grid; fall back to its first voxel
        let i = region.indices()[0];
        let c = dims.coords(i);
        centers.push(ClusterCenter {
            v: vol.data()[i],
            x: T::of(c[0] as f64),
            y: T::of(c[1] as f64),
            z: T::of(c[2] as f64),
        });
    }
    if centers.len() > k {
        let m = centers.len();
        centers = (0..k).map(|j| centers[j * m / k]).collect();
    }
    Ok((centers, s))
}

/// Result of one assignment + update step.
#[derive(Debug, Clone)]
pub struct StepResult<T> {
    pub assignment: Vec<u32>,
    pub centers: Vec<ClusterCenter<T>>,
    pub residual: T,
    pub energy: T,
    pub uncovered: usize,
}

/// One SLIC iteration: windowed nearest-centre assignment followed by the mean update.
///
/// `previous` is the assignment of the preceding iteration, if any; a voxel's
/// previous centre stays a candidate even after it moved out of window range.
/// Empty clusters keep their centre.
pub fn assign_and_update<T: Scalar>(
    vol: &Volume<T>,
    region: &LabelMask,
    centers: &[ClusterCenter<T>],
    interval: usize,
    compactness: T,
    previous: Option<&[u32]>,
) -> Result<StepResult<T>> {
    let dims = vol.dims();
    if region.dims() != dims {
        return Err(Error::Input("region dims differ from volume dims".into()));
    }
    if centers.is_empty() {
        return Err(Error::Input("no cluster centres".into()));
    }
    let data = vol.data();
    let s = interval.max(1);
    let w = compactness / T::of(s as f64);
    let w2 = w * w;
    let dist2 = |c: &ClusterCenter<T>, i: usize| -> T {
        let dv = data[i] - c.v;
        dv * dv + w2 * c.spatial_sq(dims.coords(i))
    };

    let n = dims.len();
    let labels = region.labels();
    let mut best_id = vec![NONE; n];
    // -inf outside the region: no centre ever beats it, so the scan needs no mask test
    let mut best_d: Vec<T> = labels
        .iter()
        .map(|&l| if l != 0 { T::infinity() } else { T::neg_infinity() })
        .collect();

    if let Some(prev) = previous {
        let mut i = 0;
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    let p = prev[i];
                    if p != NONE && labels[i] != 0 && (p as usize) < centers.len() {
                        let c = &centers[p as usize];
                        let dv = data[i] - c.v;
                        best_id[i] = p;
                        best_d[i] = dv * dv + w2 * c.spatial_sq([x, y, z]);
                    }
                    i += 1;
                }
            }
        }
    }

    let sf = T::of(s as f64);
    for (id, c) in centers.iter().enumerate() {
        let id = id as u32;
        let range = |center: T, len: usize| -> Option<(usize, usize)> {
            let lo = ((center - sf).ceil().as_f64() as i64).max(0);
            let hi = ((center + sf).floor().as_f64() as i64).min(len as i64 - 1);
            (lo <= hi).then_some((lo as usize, hi as usize))
        };
        let (Some((x0, x1)), Some((y0, y1)), Some((z0, z1))) =
            (range(c.x, dims.nx), range(c.y, dims.ny), range(c.z, dims.nz))
        else {
            continue;
        };
        for z in z0..=z1 {
            let dz = c.z - T::of(z as f64);
            for y in y0..=y1 {
                let dy = c.y - T::of(y as f64);
                let dyz = dy * dy + dz * dz;
                let row = dims.index(0, y, z);
                let span = row + x0..row + x1 + 1;
                let val = &data[span.clone()];
                let (bd, bi) = (&mut best_d[span.clone()], &mut best_id[span]);
                for (j, ((&v, d_best), i_best)) in val.iter().zip(bd.iter_mut()).zip(bi.iter_mut()).enumerate() {
                    let dx = c.x - T::of((x0 + j) as f64);
                    let dv = v - c.v;
                    let d = dv * dv + w2 * (dx * dx + dyz);
                    // equal distances go to the lower id; matters only against a carried-over label
                    if (d < *d_best) | ((d == *d_best) & (id < *i_best)) {
                        *d_best = d;
                        *i_best = id;
                    }
                }
            }
        }
    }

    let mut uncovered = 0;
    for i in 0..n {
        if region.is_set(i) && best_id[i] == NONE {
            uncovered += 1;
            for (id, c) in centers.iter().enumerate() {
                let d = dist2(c, i);
                if d < best_d[i] {
                    best_d[i] = d;
                    best_id[i] = id as u32;
                }
            }
        }
    }

    let mut sums = vec![[0f64; 4]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    let mut energy = 0f64;
    let mut members = 0usize;
    let mut i = 0;
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let id = best_id[i];
                if id != NONE {
                    let acc = &mut sums[id as usize];
                    acc[0] += data[i].as_f64();
                    acc[1] += x as f64;
                    acc[2] += y as f64;
                    acc[3] += z as f64;
                    counts[id as usize] += 1;
                    energy += best_d[i].as_f64();
                    members += 1;
                }
                i += 1;
            }
        }
    }

    let updated: Vec<ClusterCenter<T>> = centers
        .iter()
        .zip(sums.iter().zip(&counts))
        .map(|(old, (s, &cnt))| {
            if cnt == 0 {
                *old
            } else {
                let k = cnt as f64;
                ClusterCenter {
                    v: T::of(s[0] / k),
                    x: T::of(s[1] / k),
                    y: T::of(s[2] / k),
                    z: T::of(s[3] / k),
                }
            }
        })
        .collect();
    let residual = centers
        .iter()
        .zip(&updated)
        .map(|(a, b)| a.displacement_sq(b))
        .sum::<T>()
        .sqrt();

    Ok(StepResult {
        assignment: best_id,
        centers: updated,
        residual,
        energy: T::of(energy / members.max(1) as f64),
        uncovered,
    })
}

/// Full SLIC: iterate to convergence, enforce connectivity, drop empty clusters.
pub fn run_slic<T: Scalar>(vol: &Volume<T>, region: &LabelMask, params: &SlicParams<T>) -> Result<SupervoxelMap<T>> {
    params.validate()?;
    let (mut centers, interval) = init_centers(vol, region, params.k)?;
    let mut diagnostics = SlicDiagnostics::default();
    let mut assignment: Option<Vec<u32>> = None;

    for _ in 0..params.max_iters {
        let step = assign_and_update(
            vol,
            region,
            &centers,
            interval,
            params.compactness,
            assignment.as_deref(),
        )?;
        diagnostics.iterations += 1;
        diagnostics.residuals.push(step.residual.as_f64());
        diagnostics.energies.push(step.energy.as_f64());
        diagnostics.uncovered += step.uncovered;
        centers = step.centers;
        assignment = Some(step.assignment);
        if step.residual < params.tol {
            break;
        }
    }

    let mut map = SupervoxelMap {
        dims: vol.dims(),
        assignment: assignment.expect("at least one iteration"),
        centers,
        k_requested: params.k,
        interval,
        diagnostics,
    };
    enforce_connectivity(vol, &mut map);
    Ok(map)
}

struct Components {
    /// Component id per voxel, `NONE` outside the region.
    comp: Vec<u32>,
    /// (cluster id, size, first voxel) per component.
    info: Vec<(u32, usize, usize)>,
    /// Voxels grouped by component; component `c` owns `voxels[start[c]..start[c + 1]]`.
    voxels: Vec<usize>,
    start: Vec<usize>,
}

/// Face neighbours of voxel `i`, written into `out`; returns how many.
#[inline]
fn neighbours(dims: Dims, i: usize, out: &mut [usize; 6]) -> usize {
    let plane = dims.nx * dims.ny;
    let x = i % dims.nx;
    let y = (i / dims.nx) % dims.ny;
    let z = i / plane;
    let mut n = 0;
    let mut push = |ok: bool, j: usize| {
        if ok {
            out[n] = j;
            n += 1;
        }
    };
    push(x > 0, i.wrapping_sub(1));
    push(x + 1 < dims.nx, i + 1);
    push(y > 0, i.wrapping_sub(dims.nx));
    push(y + 1 < dims.ny, i + dims.nx);
    push(z > 0, i.wrapping_sub(plane));
    push(z + 1 < dims.nz, i + plane);
    n
}

fn label_components(dims: Dims, assignment: &[u32]) -> Components {
    let mut comp = vec![NONE; assignment.len()];
    let mut info = Vec::new();
    let mut voxels = Vec::new();
    let mut start = vec![0];
    let mut stack = Vec::new();
    let mut nbs = [0usize; 6];
    for first in 0..assignment.len() {
        let label = assignment[first];
        if label == NONE || comp[first] != NONE {
            continue;
        }
        let id = info.len() as u32;
        comp[first] = id;
        stack.push(first);
        let before = voxels.len();
        while let Some(i) = stack.pop() {
            voxels.push(i);
            let k = neighbours(dims, i, &mut nbs);
            for &nb in &nbs[..k] {
                if comp[nb] == NONE && assignment[nb] == label {
                    comp[nb] = id;
                    stack.push(nb);
                }
            }
        }
        info.push((label, voxels.len() - before, first));
        start.push(voxels.len());
    }
    Components {
        comp,
        info,
        voxels,
        start,
    }
}

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

/// Relabels every non-dominant fragment of a supervoxel into the adjacent
/// group it shares the most faces with, then renumbers clusters densely and
/// recomputes centres as member means.
fn enforce_connectivity<T: Scalar>(vol: &Volume<T>, map: &mut SupervoxelMap<T>) {
    let dims = map.dims;
    let Components {
        comp,
        info,
        voxels,
        start,
    } = label_components(dims, &map.assignment);
    let n_comp = info.len();

    // dominant component per cluster: largest, then earliest
    let mut dominant: Vec<Option<usize>> = vec![None; map.centers.len()];
    for (c, &(label, size, _)) in info.iter().enumerate() {
        let slot = &mut dominant[label as usize];
        match *slot {
            Some(d) if info[d].1 >= size => {}
            _ => *slot = Some(c),
        }
    }
    let is_dominant: Vec<bool> = (0..n_comp).map(|c| dominant[info[c].0 as usize] == Some(c)).collect();

    let mut parent: Vec<usize> = (0..n_comp).collect();
    let mut group_has_dominant = is_dominant.clone();
    // group membership as linked lists: head component, next component, tail
    let mut next_member: Vec<usize> = vec![usize::MAX; n_comp];
    let mut tail: Vec<usize> = (0..n_comp).collect();
    let mut group_min_label: Vec<u32> = info.iter().map(|i| i.0).collect();

    let mut fragments: Vec<usize> = (0..n_comp).filter(|&c| !is_dominant[c]).collect();
    fragments.sort_by_key(|&c| (info[c].1, info[c].2));

    let mut merged = 0;
    // (neighbouring group root, shared faces); few distinct groups, so a linear tally beats sorting
    let mut shared: Vec<(usize, usize)> = Vec::new();
    let mut nbs = [0usize; 6];
    for f in fragments {
        let root = find(&mut parent, f);
        if group_has_dominant[root] {
            continue;
        }
        // one entry per face shared with another group
        shared.clear();
        let mut m = root;
        while m != usize::MAX {
            for &v in &voxels[start[m]..start[m + 1]] {
                let k = neighbours(dims, v, &mut nbs);
                for &nb in &nbs[..k] {
                    let c = comp[nb];
                    if c != NONE && c as usize != m {
                        let r = find(&mut parent, c as usize);
                        if r != root {
                            match shared.iter_mut().find(|e| e.0 == r) {
                                Some(e) => e.1 += 1,
                                None => shared.push((r, 1)),
                            }
                        }
                    }
                }
            }
            m = next_member[m];
        }
        // most shared faces; ties to the group whose lowest cluster id is smallest, then the later root
        let target = shared.iter().max_by(|a, b| {
            a.1.cmp(&b.1)
                .then(group_min_label[b.0].cmp(&group_min_label[a.0]))
                .then(a.0.cmp(&b.0))
        });
        if let Some(&(r, _)) = target {
            parent[root] = r;
            next_member[tail[r]] = root;
            tail[r] = tail[root];
            group_has_dominant[r] |= group_has_dominant[root];
            group_min_label[r] = group_min_label[r].min(group_min_label[root]);
            merged += 1;
        }
    }

    // final label per group: the dominant's cluster id, or a fresh id
    let mut group_label: Vec<u32> = vec![NONE; n_comp];
    for c in 0..n_comp {
        if is_dominant[c] {
            let r = find(&mut parent, c);
            group_label[r] = info[c].0;
        }
    }
    let mut next_new = map.centers.len() as u32;
    let mut added = 0;
    // fresh ids in order of first voxel
    let mut first_voxel: Vec<usize> = vec![usize::MAX; n_comp];
    for c in 0..n_comp {
        let r = find(&mut parent, c);
        first_voxel[r] = first_voxel[r].min(info[c].2);
    }
    let mut roots: Vec<usize> = (0..n_comp).filter(|&c| parent[c] == c).collect();
    roots.sort_by_key(|&r| first_voxel[r]);
    for r in roots {
        if group_label[r] == NONE {
            group_label[r] = next_new;
            next_new += 1;
            added += 1;
        }
    }

    let provisional: Vec<u32> = comp
        .iter()
        .map(|&c| {
            if c == NONE {
                NONE
            } else {
                let r = find(&mut parent, c as usize);
                group_label[r]
            }
        })
        .collect();

    // dense renumbering in provisional-id order, dropping empty clusters
    let n_prov = next_new as usize;
    let mut sums = vec![[0f64; 4]; n_prov];
    let mut counts = vec![0usize; n_prov];
    for (i, &l) in provisional.iter().enumerate() {
        if l == NONE {
            continue;
        }
        let c = dims.coords(i);
        let s = &mut sums[l as usize];
        s[0] += vol.data()[i].as_f64();
        s[1] += c[0] as f64;
        s[2] += c[1] as f64;
        s[3] += c[2] as f64;
        counts[l as usize] += 1;
    }
    let mut remap = vec![NONE; n_prov];
    let mut centers = Vec::new();
    for l in 0..n_prov {
        if counts[l] > 0 {
            remap[l] = centers.len() as u32;
            let k = counts[l] as f64;
            let s = sums[l];
            centers.push(ClusterCenter {
                v: T::of(s[0] / k),
                x: T::of(s[1] / k),
                y: T::of(s[2] / k),
                z: T::of(s[3] / k),
            });
        }
    }
    map.assignment = provisional
        .into_iter()
        .map(|l| if l == NONE { NONE } else { remap[l as usize] })
        .collect();
    map.centers = centers;
    map.diagnostics.fragments_merged = merged;
    map.diagnostics.clusters_added = added;
}

/// One keypoint per supervoxel: the member voxel nearest its real-valued centre
/// (ties to the lowest linear index).
pub fn centroids<T: Scalar>(map: &SupervoxelMap<T>) -> Vec<(u32, [usize; 3])> {
    let mut best: Vec<Option<(T, usize)>> = vec![None; map.centers.len()];
    for (i, &a) in map.assignment.iter().enumerate() {
        if a == NONE {
            continue;
        }
        let d = map.centers[a as usize].spatial_sq(map.dims.coords(i));
        let slot = &mut best[a as usize];
        if slot.is_none_or(|(bd, _)| d < bd) {
            *slot = Some((d, i));
        }
    }
    best.into_iter()
        .enumerate()
        .filter_map(|(id, b)| b.map(|(_, i)| (id as u32, map.dims.coords(i))))
        .collect()
}

/// True when every supervoxel is a single 6-connected component.
pub fn is_connected(dims: Dims, assignment: &[u32]) -> bool {
    let comps = label_components(dims, assignment);
    let mut seen = std::collections::HashSet::new();
    comps.info.iter().all(|&(label, _, _)| seen.insert(label))
}

/// Voxels with a face neighbour carrying a different label (labels compared as given).
fn boundary_voxels<L: PartialEq + Copy>(dims: Dims, labels: &[L], active: impl Fn(usize) -> bool) -> Vec<usize> {
    (0..labels.len())
        .filter(|&i| active(i) && dims.face_neighbors(i).any(|nb| active(nb) && labels[nb] != labels[i]))
        .collect()
}

/// Fraction of ground-truth boundary voxels lying within `tol` voxels
/// (Chebyshev distance) of a supervoxel boundary voxel. Only voxels inside the
/// map's region take part.
pub fn boundary_recall<T: Scalar>(map: &SupervoxelMap<T>, truth: &[u32], tol: usize) -> f64 {
    let dims = map.dims;
    let active = |i: usize| map.assignment[i] != NONE;
    let truth_b = boundary_voxels(dims, truth, active);
    if truth_b.is_empty() {
        return 1.0;
    }
    let mut is_sv_boundary = vec![false; dims.len()];
    for i in boundary_voxels(dims, &map.assignment, active) {
        is_sv_boundary[i] = true;
    }
    let t = tol as i64;
    let hit = truth_b
        .iter()
        .filter(|&&i| {
            let [x, y, z] = dims.coords(i).map(|c| c as i64);
            (-t..=t).any(|dz| {
                (-t..=t).any(|dy| {
                    (-t..=t).any(|dx| {
                        dims.checked_index(x + dx, y + dy, z + dz)
                            .is_some_and(|j| is_sv_boundary[j])
                    })
                })
            })
        })
        .count();
    hit as f64 / truth_b.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(n: usize, v: f64) -> (Volume<f64>, LabelMask) {
        let d = Dims::new(n, n, n);
        (Volume::filled(d, [1.0; 3], v).unwrap(), LabelMask::from_fn(d, |_| true))
    }

    #[test]
    fn grid_interval_uses_cube_root() {
        assert_eq!(grid_interval(64, 8), 2);
        assert_eq!(grid_interval(64, 1), 4);
        assert_eq!(grid_interval(350 * 10, 10), 7);
        assert_eq!(grid_interval(5, 5), 1);
    }

    #[test]
    fn init_on_4_cube_k8_gives_block_centres() {
        let (v, r) = cube(4, -550.0);
        let (centers, s) = init_centers(&v, &r, 8).unwrap();
        assert_eq!(s, 2);
        assert_eq!(centers.len(), 8);
        let mut pts: Vec<[f64; 3]> = centers.iter().map(|c| [c.x, c.y, c.z]).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expected = Vec::new();
        for x in [0.5, 2.5] {
            for y in [0.5, 2.5] {
                for z in [0.5, 2.5] {
                    expected.push([x, y, z]);
                }
            }
        }
        assert_eq!(pts, expected);
        assert!(centers.iter().all(|c| c.v == -550.0));
    }

    #[test]
    fn k_one_gives_single_center_and_single_supervoxel() {
        let (v, r) = cube(4, 10.0);
        let (centers, _) = init_centers(&v, &r, 1).unwrap();
        assert_eq!(centers.len(), 1);
        let map = run_slic(&v, &r, &SlicParams::with_k(1)).unwrap();
        assert_eq!(map.k_actual(), 1);
        assert!(map.assignment.iter().all(|&a| a == 0));
    }

    #[test]
    fn k_exceeding_region_is_rejected() {
        let (v, r) = cube(2, 0.0);
        assert!(matches!(
            init_centers(&v, &r, 9),
            Err(Error::Parameter { name: "slic-k", .. })
        ));
        assert!(init_centers(&v, &LabelMask::zeros(v.dims()), 1).is_err());
    }

    #[test]
    fn constant_cube_converges_to_exact_blocks() {
        let (v, r) = cube(4, -550.0);
        let (centers, s) = init_centers(&v, &r, 8).unwrap();
        let step = assign_and_update(&v, &r, &centers, s, 10.0, None).unwrap();
        assert_eq!(step.residual, 0.0);
        let d = v.dims();
        for i in 0..d.len() {
            let [x, y, z] = d.coords(i);
            let block = |c: usize| (c / 2) as f64 * 2.0 + 0.5;
            let c = step.centers[step.assignment[i] as usize];
            assert_eq!([c.x, c.y, c.z], [block(x), block(y), block(z)]);
        }

        let map = run_slic(&v, &r, &SlicParams::with_k(8)).unwrap();
        assert!(map.diagnostics.iterations <= 2);
        assert_eq!(map.k_actual(), 8);
        assert_eq!(map.sizes(), vec![8; 8]);
    }

    #[test]
    fn single_cluster_moves_to_global_mean() {
        let d = Dims::new(3, 2, 2);
        let data: Vec<f64> = (0..12).map(|i| (i * 37 % 11) as f64 * 10.0).collect();
        let v = Volume::from_hu(d, [1.0; 3], data.clone()).unwrap();
        let r = LabelMask::from_fn(d, |_| true);
        let start = [ClusterCenter {
            v: 0.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }];
        let step = assign_and_update(&v, &r, &start, 3, 10.0, None).unwrap();
        let c = step.centers[0];
        assert!((c.v - data.iter().sum::<f64>() / 12.0).abs() < 1e-12);
        assert!((c.x - 1.0).abs() < 1e-12);
        assert!((c.y - 0.5).abs() < 1e-12);
        assert!((c.z - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uncovered_voxels_fall_back_to_nearest_centre() {
        let d = Dims::new(12, 1, 1);
        let v = Volume::<f64>::filled(d, [1.0; 3], 0.0).unwrap();
        let r = LabelMask::from_fn(d, |_| true);
        let start = [ClusterCenter {
            v: 0.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }];
        let step = assign_and_update(&v, &r, &start, 2, 10.0, None).unwrap();
        assert_eq!(step.uncovered, 9);
        assert!(step.assignment.iter().all(|&a| a == 0));
    }

    #[test]
    fn two_intensity_halves_never_mix() {
        let d = Dims::new(12, 8, 6);
        let data: Vec<f64> = (0..d.len())
            .map(|i| if d.coords(i)[0] < 6 { -900.0 } else { -100.0 })
            .collect();
        let v = Volume::from_hu(d, [1.0; 3], data).unwrap();
        let r = LabelMask::from_fn(d, |_| true);
        for k in [2, 4, 9, 20] {
            let mut p = SlicParams::with_k(k);
            p.compactness = 1.0;
            let map = run_slic(&v, &r, &p).unwrap();
            for c in 0..map.k_actual() as u32 {
                let sides: std::collections::HashSet<bool> = (0..d.len())
                    .filter(|&i| map.assignment[i] == c)
                    .map(|i| d.coords(i)[0] < 6)
                    .collect();
                assert_eq!(sides.len(), 1, "k = {k}, cluster {c} spans the boundary");
            }
        }
    }

    #[test]
    fn centroid_of_single_supervoxel_cube_is_central_voxel() {
        let (v, r) = cube(5, 0.0);
        let map = run_slic(&v, &r, &SlicParams::with_k(1)).unwrap();
        assert_eq!(centroids(&map), vec![(0, [2, 2, 2])]);
    }

    #[test]
    fn disconnected_region_components_get_their_own_supervoxel() {
        let d = Dims::new(9, 3, 3);
        let v = Volume::<f64>::filled(d, [1.0; 3], 0.0).unwrap();
        // two slabs separated by an out-of-region gap
        let r = LabelMask::from_fn(d, |i| d.coords(i)[0] != 4);
        let map = run_slic(&v, &r, &SlicParams::with_k(1)).unwrap();
        assert!(is_connected(d, &map.assignment));
        assert_eq!(map.k_actual(), 2);
        assert_eq!(map.diagnostics.clusters_added, 1);
    }

    #[test]
    fn fragments_merge_into_dominant_neighbour() {
        let d = Dims::new(5, 1, 1);
        let v = Volume::<f64>::filled(d, [1.0; 3], 0.0).unwrap();
        let mut map = SupervoxelMap {
            dims: d,
            assignment: vec![0, 0, 1, 1, 0],
            centers: vec![
                ClusterCenter {
                    v: 0.0,
                    x: 0.0,
                    y: 0.0,
                    z: 0.0
                };
                2
            ],
            k_requested: 2,
            interval: 1,
            diagnostics: SlicDiagnostics::default(),
        };
        enforce_connectivity(&v, &mut map);
        assert_eq!(map.assignment, vec![0, 0, 1, 1, 1]);
        assert_eq!(map.diagnostics.fragments_merged, 1);
        assert!((map.centers[1].x - 3.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_recall_on_aligned_partition_is_one() {
        let d = Dims::new(8, 4, 4);
        let truth: Vec<u32> = (0..d.len()).map(|i| (d.coords(i)[0] >= 4) as u32).collect();
        let map = SupervoxelMap::<f64> {
            dims: d,
            assignment: truth.clone(),
            centers: vec![
                ClusterCenter {
                    v: 0.0,
                    x: 0.0,
                    y: 0.0,
                    z: 0.0
                };
                2
            ],
            k_requested: 2,
            interval: 4,
            diagnostics: SlicDiagnostics::default(),
        };
        assert_eq!(boundary_recall(&map, &truth, 0), 1.0);
        let shifted: Vec<u32> = (0..d.len()).map(|i| (d.coords(i)[0] >= 7) as u32).collect();
        // truth boundary at x = 6, 7; supervoxel boundary at x = 3, 4
        assert_eq!(boundary_recall(&map, &shifted, 1), 0.0);
        assert_eq!(boundary_recall(&map, &shifted, 2), 0.5);
        assert_eq!(boundary_recall(&map, &shifted, 3), 1.0);
    }
}
