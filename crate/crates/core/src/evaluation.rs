//! Dice scoring, synthetic thoracic phantoms and batch evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_kv, parse_value};
use crate::error::{Error, Result};
use crate::forest::ForestModel;
use crate::pipeline::{build_search_space, run_pipeline, stage_one, PipelineConfig, Timings};
use crate::scalar::Scalar;
use crate::texture::{self, FeatureRecord};
use crate::volume::{Dims, LabelMask, Volume};

/// `2|a ∩ b| / (|a| + |b|)`, and 1 when both masks are empty.
pub fn dice(a: &LabelMask, b: &LabelMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Input(format!("mask dims differ: {} vs {}", a.dims(), b.dims())));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        let (x, y) = (x != 0, y != 0);
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    /// Squared normalised radius of `p`; at most 1 inside.
    pub fn level(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2)).sum()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.level(p) <= 1.0
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radii.iter().product::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlobTexture {
    /// Dense, smooth: soft-tissue attenuation with little noise.
    Consolidation,
    /// Ground-glass opacity: hazy and noisy.
    Ggo,
}

impl std::str::FromStr for BlobTexture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "consolidation" => Ok(BlobTexture::Consolidation),
            "ggo" => Ok(BlobTexture::Ggo),
            other => Err(Error::PhantomSpec(format!("unknown blob texture {other:?}"))),
        }
    }
}

impl std::fmt::Display for BlobTexture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BlobTexture::Consolidation => "consolidation",
            BlobTexture::Ggo => "ggo",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub texture: BlobTexture,
    pub shape: Ellipsoid,
}

/// Synthetic chest: air, an elliptic body cylinder, a bone ring, two lung
/// ellipsoids and pathology blobs clipped to the lungs. Coordinates are in
/// voxel units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub seed: u64,
    pub air_hu: f64,
    pub body_hu: f64,
    pub body_noise: f64,
    /// Axial centre shared by body and rib ring.
    pub body_center: [f64; 2],
    pub body_radii: [f64; 2],
    pub rib_hu: f64,
    /// Radii of the ring's centre line.
    pub rib_radii: [f64; 2],
    pub rib_thickness: f64,
    pub lung_hu: f64,
    pub lung_noise: f64,
    pub lungs: [Ellipsoid; 2],
    pub consolidation_hu: f64,
    pub consolidation_noise: f64,
    pub ggo_hu: f64,
    pub ggo_noise: f64,
    pub blobs: Vec<Blob>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [96, 96, 64],
            spacing: [1.0; 3],
            seed: 0,
            air_hu: -1000.0,
            body_hu: 40.0,
            body_noise: 30.0,
            body_center: [47.5, 47.5],
            body_radii: [44.0, 38.0],
            rib_hu: 700.0,
            rib_radii: [40.0, 34.0],
            rib_thickness: 2.5,
            lung_hu: -550.0,
            lung_noise: 40.0,
            lungs: [
                Ellipsoid {
                    center: [30.0, 47.5, 31.5],
                    radii: [13.0, 22.0, 26.0],
                },
                Ellipsoid {
                    center: [65.0, 47.5, 31.5],
                    radii: [13.0, 22.0, 26.0],
                },
            ],
            consolidation_hu: 40.0,
            consolidation_noise: 8.0,
            ggo_hu: -300.0,
            ggo_noise: 60.0,
            blobs: Vec::new(),
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::PhantomSpec(msg.into())
}

impl PhantomSpec {
    pub fn texture_hu(&self, t: BlobTexture) -> (f64, f64) {
        match t {
            BlobTexture::Consolidation => (self.consolidation_hu, self.consolidation_noise),
            BlobTexture::Ggo => (self.ggo_hu, self.ggo_noise),
        }
    }

    fn ring_level(&self, x: f64, y: f64, radii: [f64; 2]) -> f64 {
        ((x - self.body_center[0]) / radii[0]).powi(2) + ((y - self.body_center[1]) / radii[1]).powi(2)
    }

    fn inner_ring(&self) -> [f64; 2] {
        let h = self.rib_thickness / 2.0;
        [self.rib_radii[0] - h, self.rib_radii[1] - h]
    }

    fn outer_ring(&self) -> [f64; 2] {
        let h = self.rib_thickness / 2.0;
        [self.rib_radii[0] + h, self.rib_radii[1] + h]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(bad("dims must be positive"));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(bad("spacing must be positive and finite"));
        }
        let noises = [
            self.body_noise,
            self.lung_noise,
            self.consolidation_noise,
            self.ggo_noise,
        ];
        if noises.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(bad("noise levels must be finite and >= 0"));
        }
        if !(self.rib_thickness > 0.0) || self.inner_ring().iter().any(|&r| r <= 0.0) {
            return Err(bad("rib ring must have positive thickness and inner radii"));
        }
        let inner = self.inner_ring();
        for (i, lung) in self.lungs.iter().enumerate() {
            if lung.radii.iter().any(|&r| !(r > 0.0)) {
                return Err(bad(format!("lung {i} radii must be positive")));
            }
            // the axial outline of the ellipsoid at its widest must sit inside the ring
            for deg in 0..360 {
                let t = (deg as f64).to_radians();
                let x = lung.center[0] + lung.radii[0] * t.cos();
                let y = lung.center[1] + lung.radii[1] * t.sin();
                if self.ring_level(x, y, inner) > 1.0 {
                    return Err(bad(format!("lung {i} extends past the rib ring")));
                }
            }
        }
        for (i, b) in self.blobs.iter().enumerate() {
            if b.shape.radii.iter().any(|&r| !(r > 0.0)) {
                return Err(bad(format!("blob {i} radii must be positive")));
            }
            if !self.lungs.iter().any(|l| l.contains(b.shape.center)) {
                return Err(bad(format!(
                    "blob {i} centre {:?} lies outside both lungs",
                    b.shape.center
                )));
            }
        }
        Ok(())
    }

    /// Reads the `key = value` phantom format written by [`PhantomSpec::to_text`].
    /// Missing keys keep their defaults; each `blob` line adds one blob.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = PhantomSpec::default();
        let nums = |k: &str, v: &str, n: usize| -> Result<Vec<f64>> {
            let vals: Vec<f64> = v.split_whitespace().map(|t| parse_value(k, t)).collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(bad(format!("`{k}` needs {n} numbers, got {}", vals.len())));
            }
            Ok(vals)
        };
        for (k, v) in parse_kv(text)? {
            match k.as_str() {
                "dims" => {
                    let d = nums(&k, &v, 3)?;
                    if d.iter().any(|x| x.fract() != 0.0 || *x < 1.0) {
                        return Err(bad("dims must be positive integers"));
                    }
                    s.dims = [d[0] as usize, d[1] as usize, d[2] as usize];
                }
                "spacing" => s.spacing = nums(&k, &v, 3)?.try_into().unwrap(),
                "seed" => s.seed = parse_value(&k, &v)?,
                "air-hu" => s.air_hu = parse_value(&k, &v)?,
                "body-hu" => s.body_hu = parse_value(&k, &v)?,
                "body-noise" => s.body_noise = parse_value(&k, &v)?,
                "body-center" => s.body_center = nums(&k, &v, 2)?.try_into().unwrap(),
                "body-radii" => s.body_radii = nums(&k, &v, 2)?.try_into().unwrap(),
                "rib-hu" => s.rib_hu = parse_value(&k, &v)?,
                "rib-radii" => s.rib_radii = nums(&k, &v, 2)?.try_into().unwrap(),
                "rib-thickness" => s.rib_thickness = parse_value(&k, &v)?,
                "lung-hu" => s.lung_hu = parse_value(&k, &v)?,
                "lung-noise" => s.lung_noise = parse_value(&k, &v)?,
                "left-lung" | "right-lung" => {
                    let n = nums(&k, &v, 6)?;
                    let e = Ellipsoid {
                        center: [n[0], n[1], n[2]],
                        radii: [n[3], n[4], n[5]],
                    };
                    s.lungs[(k == "right-lung") as usize] = e;
                }
                "consolidation-hu" => s.consolidation_hu = parse_value(&k, &v)?,
                "consolidation-noise" => s.consolidation_noise = parse_value(&k, &v)?,
                "ggo-hu" => s.ggo_hu = parse_value(&k, &v)?,
                "ggo-noise" => s.ggo_noise = parse_value(&k, &v)?,
                "blob" => {
                    let (tex, rest) = v
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| bad("`blob` needs a texture and 6 numbers"))?;
                    let n = nums(&k, rest, 6)?;
                    s.blobs.push(Blob {
                        texture: tex.parse()?,
                        shape: Ellipsoid {
                            center: [n[0], n[1], n[2]],
                            radii: [n[3], n[4], n[5]],
                        },
                    });
                }
                _ => return Err(bad(format!("unknown key `{k}`"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let v3 = |a: [f64; 3]| format!("{} {} {}", a[0], a[1], a[2]);
        let v2 = |a: [f64; 2]| format!("{} {}", a[0], a[1]);
        let ell = |e: &Ellipsoid| format!("{} {}", v3(e.center), v3(e.radii));
        let mut t = String::new();
        let _ = writeln!(t, "dims = {} {} {}", self.dims[0], self.dims[1], self.dims[2]);
        let _ = writeln!(t, "spacing = {}", v3(self.spacing));
        let _ = writeln!(t, "seed = {}", self.seed);
        let _ = writeln!(t, "air-hu = {}", self.air_hu);
        let _ = writeln!(t, "body-hu = {}", self.body_hu);
        let _ = writeln!(t, "body-noise = {}", self.body_noise);
        let _ = writeln!(t, "body-center = {}", v2(self.body_center));
        let _ = writeln!(t, "body-radii = {}", v2(self.body_radii));
        let _ = writeln!(t, "rib-hu = {}", self.rib_hu);
        let _ = writeln!(t, "rib-radii = {}", v2(self.rib_radii));
        let _ = writeln!(t, "rib-thickness = {}", self.rib_thickness);
        let _ = writeln!(t, "lung-hu = {}", self.lung_hu);
        let _ = writeln!(t, "lung-noise = {}", self.lung_noise);
        let _ = writeln!(t, "left-lung = {}", ell(&self.lungs[0]));
        let _ = writeln!(t, "right-lung = {}", ell(&self.lungs[1]));
        let _ = writeln!(t, "consolidation-hu = {}", self.consolidation_hu);
        let _ = writeln!(t, "consolidation-noise = {}", self.consolidation_noise);
        let _ = writeln!(t, "ggo-hu = {}", self.ggo_hu);
        let _ = writeln!(t, "ggo-noise = {}", self.ggo_noise);
        for b in &self.blobs {
            let _ = writeln!(t, "blob = {} {}", b.texture, ell(&b.shape));
        }
        t
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Default geometry with jittered lungs and one or two blobs, all drawn from `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = PhantomSpec {
            seed,
            ..Default::default()
        };
        for lung in &mut s.lungs {
            lung.radii[0] += rng.random_range(-1.5..=1.0);
            lung.radii[1] += rng.random_range(-3.0..=2.0);
            lung.radii[2] += rng.random_range(-3.0..=2.0);
            lung.center[1] += rng.random_range(-2.0..=2.0);
        }
        let n_blobs = rng.random_range(1..=2);
        for _ in 0..n_blobs {
            let lung = s.lungs[rng.random_range(0..2)];
            // random direction, normalised radius up to 0.9 so the centre stays inside
            let dir: [f64; 3] = loop {
                let d: [f64; 3] = [
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                ];
                let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if n > 1e-3 && n <= 1.0 {
                    break d.map(|c| c / n);
                }
            };
            let rho = rng.random_range(0.0..0.9);
            let center = [0, 1, 2].map(|a| lung.center[a] + rho * dir[a] * lung.radii[a]);
            let r = rng.random_range(5.0..=9.0);
            let radii = [
                r * rng.random_range(0.8..=1.2),
                r * rng.random_range(0.8..=1.2),
                r * rng.random_range(0.8..=1.2),
            ];
            let texture = if rng.random_bool(0.5) {
                BlobTexture::Consolidation
            } else {
                BlobTexture::Ggo
            };
            s.blobs.push(Blob {
                texture,
                shape: Ellipsoid { center, radii },
            });
        }
        s
    }
}

/// Rasterized phantom and its ground truth (lungs plus blobs).
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub volume: Volume<f64>,
    pub truth: LabelMask,
    /// Voxels covered by a blob (a subset of `truth`).
    pub pathology: LabelMask,
}

/// Rasterizes `spec` at voxel centres. HU values are rounded to integers so
/// phantoms survive an int16 round trip; noise is drawn per voxel in index order.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let d = Dims::new(spec.dims[0], spec.dims[1], spec.dims[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let (inner, outer) = (spec.inner_ring(), spec.outer_ring());
    let mut data = Vec::with_capacity(d.len());
    let mut truth = vec![0u8; d.len()];
    let mut path = vec![0u8; d.len()];
    for i in 0..d.len() {
        let [x, y, z] = d.coords(i);
        let p = [x as f64, y as f64, z as f64];
        let e: f64 = unit.sample(&mut rng);
        let in_lung = spec.lungs.iter().any(|l| l.contains(p));
        let blob = if in_lung {
            spec.blobs.iter().find(|b| b.shape.contains(p))
        } else {
            None
        };
        let (mean, sd) = if let Some(b) = blob {
            path[i] = 1;
            spec.texture_hu(b.texture)
        } else if in_lung {
            (spec.lung_hu, spec.lung_noise)
        } else if spec.ring_level(p[0], p[1], outer) <= 1.0 && spec.ring_level(p[0], p[1], inner) > 1.0 {
            (spec.rib_hu, 0.0)
        } else if spec.ring_level(p[0], p[1], spec.body_radii) <= 1.0 {
            (spec.body_hu, spec.body_noise)
        } else {
            (spec.air_hu, 0.0)
        };
        truth[i] = in_lung as u8;
        data.push((mean + sd * e).round());
    }
    Ok(Phantom {
        volume: Volume::from_hu(d, spec.spacing, data)?,
        truth: LabelMask::from_labels(d, truth)?,
        pathology: LabelMask::from_labels(d, path)?,
    })
}

/// Draws up to `n_pos` pathological and `n_neg` non-pathological keypoints
/// from the search space of one labelled volume, with pairwise
/// non-overlapping axial windows, and returns their descriptors.
///
/// A pathological keypoint's whole window must lie inside `truth`, so no
/// positive example carries texture from outside the lung. Negative keypoints
/// only need their centre outside `truth`.
pub fn training_records<T: Scalar>(
    vol: &Volume<T>,
    truth: &LabelMask,
    cfg: &PipelineConfig,
    n_pos: usize,
    n_neg: usize,
    rng_seed: u64,
) -> Result<Vec<FeatureRecord<T>>> {
    let d = vol.dims();
    if truth.dims() != d {
        return Err(Error::Input(format!(
            "truth dims {} differ from volume dims {d}",
            truth.dims()
        )));
    }
    let one = stage_one(vol, cfg, &mut Timings::default())?;
    let ss = build_search_space(vol, &one.fc_mask, cfg.bone_hu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let h = (cfg.texture.window / 2) as i64;
    let window_in_truth = |i: usize| {
        let [x, y, z] = d.coords(i);
        (-h..=h).all(|dy| {
            (-h..=h).all(|dx| {
                d.checked_index(x as i64 + dx, y as i64 + dy, z as i64)
                    .is_some_and(|j| truth.is_set(j))
            })
        })
    };
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = ss.mask.indices().into_iter().partition(|&i| truth.is_set(i));
    pos.retain(|&i| window_in_truth(i));
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let w = cfg.texture.window;
    let mut taken: Vec<Vec<[usize; 2]>> = vec![Vec::new(); d.nz];
    let mut pick = |cands: &[usize], n: usize, label: u8, out: &mut Vec<([usize; 3], u8)>| {
        let mut got = 0;
        for &i in cands {
            if got == n {
                break;
            }
            let [x, y, z] = d.coords(i);
            if taken[z]
                .iter()
                .any(|&[tx, ty]| tx.abs_diff(x) < w && ty.abs_diff(y) < w)
            {
                continue;
            }
            taken[z].push([x, y]);
            out.push(([x, y, z], label));
            got += 1;
        }
    };
    let mut chosen = Vec::with_capacity(n_pos + n_neg);
    pick(&pos, n_pos, 1, &mut chosen);
    pick(&neg, n_neg, 0, &mut chosen);

    chosen
        .into_par_iter()
        .map(|(kp, label)| {
            Ok(FeatureRecord {
                keypoint: kp,
                features: texture::extract_descriptor(vol, kp, &cfg.texture)?,
                label: Some(label),
            })
        })
        .collect()
}

/// Labelled descriptors pooled from `n_phantoms` random phantoms seeded
/// `seed, seed + 1, ...`. Per-class quotas are spread over the phantoms; a
/// phantom that cannot fill its share passes the shortfall on to the next.
pub fn phantom_training_records(
    n_phantoms: usize,
    seed: u64,
    n_pos: usize,
    n_neg: usize,
    cfg: &PipelineConfig,
) -> Result<Vec<FeatureRecord<f64>>> {
    if n_phantoms == 0 {
        return Err(Error::param("train-phantoms", "must be >= 1"));
    }
    let mut out = Vec::new();
    let (mut have_pos, mut have_neg) = (0, 0);
    for i in 0..n_phantoms {
        let left = (n_phantoms - i) as f64;
        let want_pos = ((n_pos - have_pos) as f64 / left).ceil() as usize;
        let want_neg = ((n_neg - have_neg) as f64 / left).ceil() as usize;
        let ph = generate_phantom(&PhantomSpec::random(seed + i as u64))?;
        let recs = training_records(&ph.volume, &ph.truth, cfg, want_pos, want_neg, seed + i as u64)?;
        have_pos += recs.iter().filter(|r| r.label == Some(1)).count();
        have_neg += recs.iter().filter(|r| r.label == Some(0)).count();
        out.extend(recs);
    }
    if have_pos < n_pos || have_neg < n_neg {
        log::warn!("training set short of quota: {have_pos}/{n_pos} positive, {have_neg}/{n_neg} negative");
    }
    Ok(out)
}

pub struct EvalCase<T> {
    pub name: String,
    pub volume: Volume<T>,
    pub truth: LabelMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub truth_voxels: usize,
    pub initial_voxels: usize,
    pub final_voxels: usize,
    /// DSC of the stage-one mask alone.
    pub dsc_initial: Option<f64>,
    pub dsc_final: Option<f64>,
    pub millis: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: Vec<CaseResult>,
    pub failed: usize,
    pub mean_dsc: Option<f64>,
    /// Population standard deviation over successful cases.
    pub std_dsc: Option<f64>,
    pub mean_dsc_initial: Option<f64>,
    pub std_dsc_initial: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (Some(m), Some(v.sqrt()))
}

impl EvalReport {
    pub fn from_cases(cases: Vec<CaseResult>) -> Self {
        let fin: Vec<f64> = cases.iter().filter_map(|c| c.dsc_final).collect();
        let ini: Vec<f64> = cases.iter().filter_map(|c| c.dsc_initial).collect();
        let (mean_dsc, std_dsc) = mean_std(&fin);
        let (mean_dsc_initial, std_dsc_initial) = mean_std(&ini);
        Self {
            failed: cases.iter().filter(|c| c.error.is_some()).count(),
            cases,
            mean_dsc,
            std_dsc,
            mean_dsc_initial,
            std_dsc_initial,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(format!("serializing report: {e}")))
    }
}

/// Runs the pipeline on every case. A failing case is recorded with its error
/// and excluded from the statistics.
pub fn batch_evaluate<T: Scalar>(
    cases: &[EvalCase<T>],
    model: &ForestModel<T>,
    cfg: &PipelineConfig,
) -> Result<EvalReport> {
    if cases.is_empty() {
        return Err(Error::Input("no evaluation cases".into()));
    }
    cfg.validate()?;
    let results = cases
        .par_iter()
        .map(|c| {
            let start = Instant::now();
            let mut r = CaseResult {
                name: c.name.clone(),
                truth_voxels: c.truth.count(),
                initial_voxels: 0,
                final_voxels: 0,
                dsc_initial: None,
                dsc_final: None,
                millis: 0.0,
                error: None,
            };
            let run = run_pipeline(&c.volume, model, cfg).and_then(|res| {
                Ok((
                    dice(&res.initial_mask, &c.truth)?,
                    dice(&res.final_mask, &c.truth)?,
                    res,
                ))
            });
            match run {
                Ok((di, df, res)) => {
                    r.initial_voxels = res.initial_mask.count();
                    r.final_voxels = res.final_mask.count();
                    r.dsc_initial = Some(di);
                    r.dsc_final = Some(df);
                }
                Err(e) => {
                    log::warn!("case {} failed: {e}", c.name);
                    r.error = Some(e.to_string());
                }
            }
            r.millis = start.elapsed().as_secs_f64() * 1e3;
            r
        })
        .collect();
    Ok(EvalReport::from_cases(results))
}

/// `n` random phantoms seeded `seed, seed + 1, ...` as evaluation cases.
pub fn phantom_cases(n: usize, seed: u64) -> Result<Vec<EvalCase<f64>>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let ph = generate_phantom(&PhantomSpec::random(seed + i))?;
            Ok(EvalCase {
                name: format!("phantom-{}", seed + i),
                volume: ph.volume,
                truth: ph.truth,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(d: Dims, on: impl Fn(usize) -> bool) -> LabelMask {
        LabelMask::from_fn(d, on)
    }

    #[test]
    fn dice_examples() {
        let d = Dims::new(10, 10, 3);
        let a = mask(d, |i| i < 100);
        let b = mask(d, |i| (100..200).contains(&i));
        let c = mask(d, |i| (50..150).contains(&i));
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        assert_eq!(dice(&a, &c).unwrap(), 0.5);
        assert_eq!(dice(&c, &a).unwrap(), 0.5);
        let e = LabelMask::zeros(d);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert_eq!(dice(&e, &a).unwrap(), 0.0);
        assert!(dice(&a, &LabelMask::zeros(Dims::new(1, 1, 1))).is_err());
    }

    #[test]
    fn blob_outside_lung_is_rejected() {
        let mut s = PhantomSpec::default();
        s.blobs.push(Blob {
            texture: BlobTexture::Ggo,
            shape: Ellipsoid {
                center: [47.5, 47.5, 31.5],
                radii: [3.0; 3],
            },
        });
        assert!(matches!(generate_phantom(&s), Err(Error::PhantomSpec(_))));
    }

    #[test]
    fn lung_outside_ring_is_rejected() {
        let mut s = PhantomSpec::default();
        s.lungs[0].radii[0] = 30.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_text_roundtrip() {
        for seed in 0..5 {
            let s = PhantomSpec::random(seed);
            assert_eq!(PhantomSpec::from_text(&s.to_text()).unwrap(), s);
        }
        assert!(PhantomSpec::from_text("blob = plaid 1 2 3 4 5 6").is_err());
        assert!(PhantomSpec::from_text("dims = 1 2").is_err());
    }

    #[test]
    fn random_specs_are_valid() {
        for seed in 0..50 {
            PhantomSpec::random(seed).validate().unwrap();
        }
    }

    #[test]
    fn mean_std_single_and_pair() {
        assert_eq!(mean_std(&[1.0]), (Some(1.0), Some(0.0)));
        assert_eq!(mean_std(&[0.0, 2.0]), (Some(1.0), Some(1.0)));
        assert_eq!(mean_std(&[]), (None, None));
    }
}
