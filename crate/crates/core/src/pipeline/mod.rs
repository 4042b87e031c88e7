//! Two-stage segmentation: fuzzy-connectedness parenchyma, then texture
//! classification of supervoxels inside the rib-cage hull.

pub mod hull;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fc::{self, AffinityParams, SeedPair};
use crate::forest::{Class, ForestModel};
use crate::scalar::Scalar;
use crate::slic::{self, SlicDiagnostics, SlicParams, SupervoxelMap};
use crate::texture::{self, TextureParams};
use crate::volume::{threshold, LabelMask, Volume};

pub const DEFAULT_BONE_HU: f64 = 200.0;
/// Target mean supervoxel volume, in voxels, when `k` is derived from `|R_ss|`.
pub const DEFAULT_SUPERVOXEL_SIZE: usize = 350;
pub const DEFAULT_RF_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub band_center: f64,
    pub band_halfwidth: f64,
    pub fc_mean: f64,
    pub fc_sigma: f64,
    pub fc_theta: f64,
    pub seed_rng: u64,
    pub seed_candidates: usize,
    pub bone_hu: f64,
    /// Fixed supervoxel count; `None` derives it as `|R_ss| / supervoxel_size`.
    pub slic_k: Option<usize>,
    pub supervoxel_size: usize,
    pub slic_compactness: f64,
    pub slic_max_iters: usize,
    pub slic_tol: f64,
    pub texture: TextureParams,
    pub rf_threshold: f64,
    /// Classify every search-space voxel instead of supervoxel centroids.
    pub per_voxel: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            band_center: fc::DEFAULT_MEAN,
            band_halfwidth: fc::DEFAULT_SIGMA,
            fc_mean: fc::DEFAULT_MEAN,
            fc_sigma: fc::DEFAULT_SIGMA,
            fc_theta: fc::DEFAULT_THETA,
            seed_rng: 0,
            seed_candidates: fc::DEFAULT_SEED_CANDIDATES,
            bone_hu: DEFAULT_BONE_HU,
            slic_k: None,
            supervoxel_size: DEFAULT_SUPERVOXEL_SIZE,
            slic_compactness: slic::DEFAULT_COMPACTNESS,
            slic_max_iters: slic::DEFAULT_MAX_ITERS,
            slic_tol: slic::DEFAULT_TOL,
            texture: TextureParams::default(),
            rf_threshold: DEFAULT_RF_THRESHOLD,
            per_voxel: false,
        }
    }
}

impl PipelineConfig {
    pub fn affinity<T: Scalar>(&self) -> AffinityParams<T> {
        AffinityParams {
            mean: T::of(self.fc_mean),
            sigma: T::of(self.fc_sigma),
            theta: T::of(self.fc_theta),
        }
    }

    pub fn slic_params<T: Scalar>(&self, k: usize) -> SlicParams<T> {
        SlicParams {
            k,
            compactness: T::of(self.slic_compactness),
            max_iters: self.slic_max_iters,
            tol: T::of(self.slic_tol),
        }
    }

    /// Supervoxel count for a search space of `n` voxels.
    pub fn k_for(&self, n: usize) -> usize {
        self.slic_k.unwrap_or((n / self.supervoxel_size.max(1)).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band_halfwidth >= 0.0) || !self.band_center.is_finite() || !self.band_halfwidth.is_finite() {
            return Err(Error::param(
                "band-halfwidth",
                "band centre and halfwidth must be finite, halfwidth >= 0",
            ));
        }
        self.affinity::<f64>().validate()?;
        if self.seed_candidates == 0 {
            return Err(Error::param("seed-candidates", "must be >= 1"));
        }
        if !self.bone_hu.is_finite() {
            return Err(Error::param("bone-hu", "must be finite"));
        }
        if self.slic_k == Some(0) {
            return Err(Error::param("slic-k", "must be >= 1"));
        }
        if self.supervoxel_size == 0 {
            return Err(Error::param("supervoxel-size", "must be >= 1"));
        }
        self.slic_params::<f64>(1).validate()?;
        self.texture.validate()?;
        if !(0.0..=1.0).contains(&self.rf_threshold) {
            return Err(Error::param(
                "rf-threshold",
                format!("must lie in [0, 1], got {}", self.rf_threshold),
            ));
        }
        Ok(())
    }
}

/// Rib-cage search space `R_ss` and how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub mask: LabelMask,
    pub bone: LabelMask,
    pub hull: LabelMask,
    pub bone_threshold: f64,
    /// First and last axial slice with a hull of their own.
    pub hull_slices: (usize, usize),
    /// Slices with fewer than three bone voxels that reused a neighbour's hull.
    pub borrowed_slices: usize,
}

/// Voxels strictly above `bone_hu`.
pub fn bone_mask<T: Scalar>(vol: &Volume<T>, bone_hu: f64) -> LabelMask {
    let t = T::of(bone_hu);
    let data = vol.data();
    LabelMask::from_fn(vol.dims(), |i| data[i] > t)
}

/// Per-slice convex hull of bone, minus the stage-one mask and the bone itself.
pub fn build_search_space<T: Scalar>(vol: &Volume<T>, fc_mask: &LabelMask, bone_hu: f64) -> Result<SearchSpace> {
    let d = vol.dims();
    if fc_mask.dims() != d {
        return Err(Error::Input(format!(
            "stage-one mask dims {} differ from volume dims {d}",
            fc_mask.dims()
        )));
    }
    let bone = bone_mask(vol, bone_hu);
    if bone.count() == 0 {
        return Err(Error::SearchSpace(format!(
            "no voxel above {bone_hu} HU; input does not look thoracic"
        )));
    }

    let plane = d.nx * d.ny;
    let hulls: Vec<Option<Vec<hull::Point>>> = (0..d.nz)
        .map(|z| {
            let pts: Vec<hull::Point> = (0..plane)
                .filter(|&p| bone.is_set(z * plane + p))
                .map(|p| ((p % d.nx) as i64, (p / d.nx) as i64))
                .collect();
            (pts.len() >= 3).then(|| hull::convex_hull(&pts))
        })
        .collect();
    let populated: Vec<usize> = (0..d.nz).filter(|&z| hulls[z].is_some()).collect();
    if populated.is_empty() {
        return Err(Error::SearchSpace(
            "no axial slice has three or more bone voxels".into(),
        ));
    }

    let mut hull_mask = LabelMask::zeros(d);
    let mut borrowed = 0;
    for z in 0..d.nz {
        // nearest populated slice, lower z on ties
        let src = *populated.iter().min_by_key(|&&p| (p.abs_diff(z), p)).unwrap();
        borrowed += (src != z) as usize;
        let raster = hull::rasterize(hulls[src].as_ref().unwrap(), d.nx, d.ny);
        for (p, &inside) in raster.iter().enumerate() {
            if inside {
                hull_mask.set(z * plane + p, 1);
            }
        }
    }

    let mask = hull_mask.difference(fc_mask)?.difference(&bone)?;
    Ok(SearchSpace {
        mask,
        bone,
        hull: hull_mask,
        bone_threshold: bone_hu,
        hull_slices: (populated[0], *populated.last().unwrap()),
        borrowed_slices: borrowed,
    })
}

/// Stage-one output: band mask, seeds and the binarized connectivity map.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOne {
    pub seeds: SeedPair,
    pub band_voxels: usize,
    pub fc_mask: LabelMask,
}

pub fn stage_one<T: Scalar>(vol: &Volume<T>, cfg: &PipelineConfig, timings: &mut Timings) -> Result<StageOne> {
    let band = timings.time("threshold", || {
        threshold(vol, T::of(cfg.band_center), T::of(cfg.band_halfwidth))
    })?;
    let seeds = timings
        .time("seeds", || {
            fc::select_seeds(vol, &band, cfg.seed_rng, cfg.seed_candidates)
        })
        .map_err(|e| e.in_stage("seeds"))?;
    let params = cfg.affinity::<T>();
    let cmap = timings
        .time("fc", || fc::compute_connectivity(vol, &seeds, &params))
        .map_err(|e| e.in_stage("fc"))?;
    let fc_mask = timings
        .time("binarize", || fc::binarize(&cmap, params.theta))
        .map_err(|e| e.in_stage("binarize"))?;
    Ok(StageOne {
        seeds,
        band_voxels: band.count(),
        fc_mask,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
    /// The stage did not run for this input.
    pub skipped: bool,
    /// Ran, but faster than the clock resolution.
    pub below_resolution: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings(pub Vec<StageTiming>);

impl Timings {
    pub fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let out = f();
        let millis = start.elapsed().as_secs_f64() * 1e3;
        self.0.push(StageTiming {
            stage: stage.to_string(),
            millis,
            skipped: false,
            below_resolution: millis == 0.0,
        });
        out
    }

    pub fn skip(&mut self, stage: &str) {
        self.0.push(StageTiming {
            stage: stage.to_string(),
            millis: 0.0,
            skipped: true,
            below_resolution: false,
        });
    }

    pub fn get(&self, stage: &str) -> Option<&StageTiming> {
        self.0.iter().find(|t| t.stage == stage)
    }

    pub fn total_millis(&self) -> f64 {
        self.0.iter().map(|t| t.millis).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervoxelRecord {
    pub id: u32,
    pub centroid: [usize; 3],
    pub size: usize,
    pub score: f64,
    pub pathological: bool,
}

/// Labels each supervoxel by the forest's verdict at its centroid.
pub fn classify_supervoxels<T: Scalar>(
    vol: &Volume<T>,
    svmap: &SupervoxelMap<T>,
    model: &ForestModel<T>,
    texture: &TextureParams,
    rf_threshold: f64,
) -> Result<(LabelMask, Vec<SupervoxelRecord>)> {
    let sizes = svmap.sizes();
    let records = slic::centroids(svmap)
        .into_par_iter()
        .map(|(id, c)| {
            let fv = texture::extract_descriptor(vol, c, texture)?;
            let p = model.predict_row(fv.as_slice(), rf_threshold)?;
            Ok(SupervoxelRecord {
                id,
                centroid: c,
                size: sizes[id as usize],
                score: p.score,
                pathological: p.class == Class::Pathological,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut positive = vec![false; svmap.k_actual()];
    for r in &records {
        positive[r.id as usize] = r.pathological;
    }
    let mask = LabelMask::from_fn(svmap.dims, |i| {
        let a = svmap.assignment[i];
        a != slic::NONE && positive[a as usize]
    });
    Ok((mask, records))
}

/// Dense baseline: descriptor and verdict at every search-space voxel.
pub fn classify_voxels<T: Scalar>(
    vol: &Volume<T>,
    region: &LabelMask,
    model: &ForestModel<T>,
    texture: &TextureParams,
    rf_threshold: f64,
) -> Result<LabelMask> {
    let d = vol.dims();
    let hits = region
        .indices()
        .into_par_iter()
        .map(|i| {
            let fv = texture::extract_descriptor(vol, d.coords(i), texture)?;
            Ok((
                i,
                model.predict_row(fv.as_slice(), rf_threshold)?.class == Class::Pathological,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mask = LabelMask::zeros(d);
    for (i, hit) in hits {
        if hit {
            mask.set(i, 1);
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicSummary {
    pub k_requested: usize,
    pub k_actual: usize,
    pub interval: usize,
    pub diagnostics: SlicDiagnostics,
}

/// Everything a run records apart from the masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub seeds: SeedPair,
    pub band_voxels: usize,
    pub initial_voxels: usize,
    pub search_space_voxels: usize,
    pub bone_voxels: usize,
    pub hull_slices: (usize, usize),
    pub borrowed_slices: usize,
    pub slic: Option<SlicSummary>,
    pub pathology_voxels: usize,
    pub final_voxels: usize,
    pub records: Vec<SupervoxelRecord>,
    pub timings: Timings,
}

impl PipelineReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(format!("serializing report: {e}")))
    }

    /// The report with stage durations zeroed, for run-to-run comparison.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for t in &mut r.timings.0 {
            t.millis = 0.0;
            t.below_resolution = false;
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub initial_mask: LabelMask,
    pub pathology_mask: LabelMask,
    pub final_mask: LabelMask,
    pub search_space: LabelMask,
    pub report: PipelineReport,
}

/// Both stages end to end. Deterministic for a fixed config and model.
pub fn run_pipeline<T: Scalar>(
    vol: &Volume<T>,
    model: &ForestModel<T>,
    cfg: &PipelineConfig,
) -> Result<PipelineResult> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let one = stage_one(vol, cfg, &mut timings)?;
    let ss = timings
        .time("search_space", || build_search_space(vol, &one.fc_mask, cfg.bone_hu))
        .map_err(|e| e.in_stage("search_space"))?;
    let n_ss = ss.mask.count();

    let mut slic_summary = None;
    let mut records = Vec::new();
    let pathology = if n_ss == 0 {
        timings.skip("slic");
        timings.skip("classify");
        LabelMask::zeros(vol.dims())
    } else if cfg.per_voxel {
        timings.skip("slic");
        timings
            .time("classify", || {
                classify_voxels(vol, &ss.mask, model, &cfg.texture, cfg.rf_threshold)
            })
            .map_err(|e| e.in_stage("classify"))?
    } else {
        let params = cfg.slic_params::<T>(cfg.k_for(n_ss));
        let svmap = timings
            .time("slic", || slic::run_slic(vol, &ss.mask, &params))
            .map_err(|e| e.in_stage("slic"))?;
        slic_summary = Some(SlicSummary {
            k_requested: svmap.k_requested,
            k_actual: svmap.k_actual(),
            interval: svmap.interval,
            diagnostics: svmap.diagnostics.clone(),
        });
        let (mask, recs) = timings
            .time("classify", || {
                classify_supervoxels(vol, &svmap, model, &cfg.texture, cfg.rf_threshold)
            })
            .map_err(|e| e.in_stage("classify"))?;
        records = recs;
        mask
    };

    let final_mask = timings
        .time("fusion", || one.fc_mask.union(&pathology))
        .map_err(|e| e.in_stage("fusion"))?;

    let report = PipelineReport {
        config: *cfg,
        dims: vol.dims().as_array(),
        spacing: vol.spacing(),
        seeds: one.seeds,
        band_voxels: one.band_voxels,
        initial_voxels: one.fc_mask.count(),
        search_space_voxels: n_ss,
        bone_voxels: ss.bone.count(),
        hull_slices: ss.hull_slices,
        borrowed_slices: ss.borrowed_slices,
        slic: slic_summary,
        pathology_voxels: pathology.count(),
        final_voxels: final_mask.count(),
        records,
        timings,
    };
    for t in &report.timings.0 {
        log::info!(
            "stage {:<12} {:>10.2} ms{}",
            t.stage,
            t.millis,
            if t.skipped { " (skipped)" } else { "" }
        );
    }
    Ok(PipelineResult {
        initial_mask: one.fc_mask,
        pathology_mask: pathology,
        final_mask,
        search_space: ss.mask,
        report,
    })
}
