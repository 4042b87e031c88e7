//! Command-line front end. Built-in defaults are overridden by `--config`,
//! which is overridden by individual flags. Exit codes: 0 success, 1 bad
//! input or parameters, 2 internal failure.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{parse_value, RunConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    batch_evaluate, generate_phantom, phantom_cases, phantom_training_records, training_records, EvalCase, PhantomSpec,
};
use crate::forest::{train, ForestModel, TrainingSet};
use crate::nifti::{load_mask_nifti, load_nifti, save_labels_nifti, save_mask_nifti, save_volume_nifti};
use crate::pipeline::{build_search_space, run_pipeline, stage_one, Timings};
use crate::slic::{centroids, run_slic};
use crate::texture::{extract_descriptor, read_feature_csv, write_feature_csv, FeatureRecord};
use crate::volume::{load_raw, Dims, LabelMask, RawFormat, Volume};

#[derive(Debug, Parser)]
#[command(
    name = "lungseg",
    version,
    about = "Pathological lung segmentation for chest CT",
    long_about = "Pathological lung segmentation for chest CT.\n\n\
        Stage one grows the healthy parenchyma by fuzzy connectedness from two automatic seeds. \
        Stage two clusters the rib-cage search space into supervoxels, classifies each one from \
        texture at its centroid with a random forest, and adds the pathological ones to the mask.\n\n\
        Every tunable can also be set in a `key = value` file passed with --config; flags win over \
        the file and the file wins over built-in defaults. The fully resolved configuration is \
        echoed to stderr on every run."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment the lungs of one CT volume.
    Segment(SegmentArgs),
    /// Train the texture forest from a feature CSV or from synthetic phantoms.
    Train(TrainArgs),
    /// Extract texture descriptors to CSV.
    Features(FeaturesArgs),
    /// Synthetic thoracic phantoms.
    #[command(subcommand)]
    Phantom(PhantomCommand),
    /// Ground-truth evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run supervoxel clustering and write the label map.
    SlicExport(SlicExportArgs),
}

#[derive(Debug, Subcommand)]
pub enum PhantomCommand {
    /// Rasterize a phantom volume and its ground truth.
    Generate(PhantomArgs),
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Segment a batch of cases and report Dice scores.
    Run(EvalArgs),
}

/// Where a volume comes from. NIfTI-1 (`.nii` or `.nii.gz`) unless `--raw-dims` is given.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input CT volume in HU.
    #[arg(long, required = true)]
    pub input: Option<PathBuf>,
    /// Read the input as headerless little-endian data of this size, `NX,NY,NZ`.
    #[arg(long, value_name = "NX,NY,NZ")]
    pub raw_dims: Option<String>,
    /// Scalar type of a raw input: i16, u16, f32 or f64. [default: i16]
    #[arg(long, requires = "raw_dims")]
    pub raw_format: Option<String>,
    /// Voxel spacing in mm of a raw input, `SX,SY,SZ`. [default: 1,1,1]
    #[arg(long, requires = "raw_dims", value_name = "SX,SY,SZ")]
    pub raw_spacing: Option<String>,
}

/// Tunables shared by every subcommand. Each maps to the config key of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` configuration file applied before the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; `auto` uses every core. [default: auto]
    #[arg(long)]
    pub threads: Option<String>,

    /// Centre of the initial HU band used to pick seeds. [default: -550]
    #[arg(long, allow_hyphen_values = true, help_heading = "Stage one")]
    pub band_center: Option<String>,
    /// Half-width of the initial HU band. [default: 150]
    #[arg(long, allow_hyphen_values = true, help_heading = "Stage one")]
    pub band_halfwidth: Option<String>,
    /// Parenchyma mean of the affinity function, HU. [default: -550]
    #[arg(long, allow_hyphen_values = true, help_heading = "Stage one")]
    pub fc_mean: Option<String>,
    /// Spread of the affinity function, HU. [default: 150]
    #[arg(long, allow_hyphen_values = true, help_heading = "Stage one")]
    pub fc_sigma: Option<String>,
    /// Connectivity cutoff for the initial mask. [default: 0.5]
    #[arg(long, allow_hyphen_values = true, help_heading = "Stage one")]
    pub fc_theta: Option<String>,
    /// Seed for the seed-candidate draw. [default: 0]
    #[arg(long, allow_hyphen_values = true, help_heading = "Stage one")]
    pub seed_rng: Option<String>,
    /// Seed candidates drawn per lateral half. [default: 10]
    #[arg(long, allow_hyphen_values = true, help_heading = "Stage one")]
    pub seed_candidates: Option<String>,

    /// Bone threshold for the rib-cage hull, HU. [default: 200]
    #[arg(long, allow_hyphen_values = true, help_heading = "Search space")]
    pub bone_hu: Option<String>,

    /// Supervoxel count; `auto` derives it from --supervoxel-size. [default: auto]
    #[arg(long, allow_hyphen_values = true, help_heading = "Supervoxels")]
    pub slic_k: Option<String>,
    /// Target mean supervoxel volume in voxels when --slic-k is auto. [default: 350]
    #[arg(long, allow_hyphen_values = true, help_heading = "Supervoxels")]
    pub supervoxel_size: Option<String>,
    /// Spatial weight of the clustering distance. [default: 10]
    #[arg(long, allow_hyphen_values = true, help_heading = "Supervoxels")]
    pub slic_compactness: Option<String>,
    /// Maximum clustering iterations. [default: 10]
    #[arg(long, allow_hyphen_values = true, help_heading = "Supervoxels")]
    pub slic_max_iters: Option<String>,
    /// Stop when the centre residual drops below this. [default: 1]
    #[arg(long, allow_hyphen_values = true, help_heading = "Supervoxels")]
    pub slic_tol: Option<String>,

    /// Co-occurrence grey levels. [default: 16]
    #[arg(long, allow_hyphen_values = true, help_heading = "Texture")]
    pub glcm_bins: Option<String>,
    /// Co-occurrence pixel offset. [default: 2]
    #[arg(long, allow_hyphen_values = true, help_heading = "Texture")]
    pub glcm_offset: Option<String>,
    /// Co-occurrence directions (0, 45, 90, 135 degrees). [default: 4]
    #[arg(long, allow_hyphen_values = true, help_heading = "Texture")]
    pub glcm_directions: Option<String>,
    /// Run-length grey levels. [default: 8]
    #[arg(long, allow_hyphen_values = true, help_heading = "Texture")]
    pub glrlm_levels: Option<String>,
    /// Run-length directions. [default: 4]
    #[arg(long, allow_hyphen_values = true, help_heading = "Texture")]
    pub glrlm_directions: Option<String>,
    /// Side of the square axial texture window, odd. [default: 7]
    #[arg(long, allow_hyphen_values = true, help_heading = "Texture")]
    pub window: Option<String>,

    /// Minimum pathological vote fraction. [default: 0.5]
    #[arg(long, allow_hyphen_values = true, help_heading = "Classification")]
    pub rf_threshold: Option<String>,
    /// Classify every search-space voxel instead of one centroid per supervoxel.
    #[arg(long, help_heading = "Classification")]
    pub per_voxel: bool,
    /// Trees in the forest. [default: 70]
    #[arg(long, allow_hyphen_values = true, help_heading = "Forest training")]
    pub rf_trees: Option<String>,
    /// Fraction of rows in each tree's bag. [default: 0.6]
    #[arg(long, allow_hyphen_values = true, help_heading = "Forest training")]
    pub rf_bag_fraction: Option<String>,
    /// Draw bags with replacement. [default: false]
    #[arg(long, allow_hyphen_values = true, help_heading = "Forest training")]
    pub rf_bootstrap: Option<String>,
    /// Features tried per split; `auto` is round(sqrt(24)). [default: auto]
    #[arg(long, allow_hyphen_values = true, help_heading = "Forest training")]
    pub rf_max_features: Option<String>,
    /// Forest random seed. [default: 0]
    #[arg(long, allow_hyphen_values = true, help_heading = "Forest training")]
    pub rf_seed: Option<String>,
    /// Pathological keypoints to sample for training. [default: 507]
    #[arg(long, allow_hyphen_values = true, help_heading = "Forest training")]
    pub train_positives: Option<String>,
    /// Non-pathological keypoints to sample for training. [default: 490]
    #[arg(long, allow_hyphen_values = true, help_heading = "Forest training")]
    pub train_negatives: Option<String>,
    /// Phantoms to sample training keypoints from. [default: 16]
    #[arg(long, allow_hyphen_values = true, help_heading = "Forest training")]
    pub train_phantoms: Option<String>,
    /// First training phantom seed; later phantoms use the following seeds. [default: 1000]
    #[arg(long, allow_hyphen_values = true, help_heading = "Forest training")]
    pub train_seed: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let opts: [(&'static str, &Option<String>); 30] = [
            ("threads", &self.threads),
            ("band-center", &self.band_center),
            ("band-halfwidth", &self.band_halfwidth),
            ("fc-mean", &self.fc_mean),
            ("fc-sigma", &self.fc_sigma),
            ("fc-theta", &self.fc_theta),
            ("seed-rng", &self.seed_rng),
            ("seed-candidates", &self.seed_candidates),
            ("bone-hu", &self.bone_hu),
            ("slic-k", &self.slic_k),
            ("supervoxel-size", &self.supervoxel_size),
            ("slic-compactness", &self.slic_compactness),
            ("slic-max-iters", &self.slic_max_iters),
            ("slic-tol", &self.slic_tol),
            ("glcm-bins", &self.glcm_bins),
            ("glcm-offset", &self.glcm_offset),
            ("glcm-directions", &self.glcm_directions),
            ("glrlm-levels", &self.glrlm_levels),
            ("glrlm-directions", &self.glrlm_directions),
            ("window", &self.window),
            ("rf-threshold", &self.rf_threshold),
            ("rf-trees", &self.rf_trees),
            ("rf-bag-fraction", &self.rf_bag_fraction),
            ("rf-bootstrap", &self.rf_bootstrap),
            ("rf-max-features", &self.rf_max_features),
            ("rf-seed", &self.rf_seed),
            ("train-positives", &self.train_positives),
            ("train-negatives", &self.train_negatives),
            ("train-phantoms", &self.train_phantoms),
            ("train-seed", &self.train_seed),
        ];
        let mut out: Vec<_> = opts
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        if self.per_voxel {
            out.push(("per-voxel", "true".into()));
        }
        out
    }

    /// Defaults, then the config file, then flags; validated before returning.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Trained forest model (JSON).
    #[arg(long, required = true)]
    pub model: Option<PathBuf>,
    /// Final lung mask (NIfTI-1).
    #[arg(long, required = true)]
    pub output: Option<PathBuf>,
    /// Also write the stage-one mask here.
    #[arg(long)]
    pub initial_output: Option<PathBuf>,
    /// Write the run report (JSON) here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled feature CSV(s) from `features`. Without this, keypoints are
    /// sampled from synthetic phantoms (see the training flags).
    #[arg(long, num_args = 1..)]
    pub features: Vec<PathBuf>,
    /// Where to write the model (JSON).
    #[arg(long, required = true)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Volume to describe. Without it, a labelled training set is sampled from phantoms.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Read the input as headerless little-endian data of this size, `NX,NY,NZ`.
    #[arg(long, requires = "input", value_name = "NX,NY,NZ")]
    pub raw_dims: Option<String>,
    /// Scalar type of a raw input: i16, u16, f32 or f64. [default: i16]
    #[arg(long, requires = "raw_dims")]
    pub raw_format: Option<String>,
    /// Voxel spacing in mm of a raw input, `SX,SY,SZ`. [default: 1,1,1]
    #[arg(long, requires = "raw_dims", value_name = "SX,SY,SZ")]
    pub raw_spacing: Option<String>,
    /// Ground-truth lung mask; keypoints are then sampled and labelled for training.
    #[arg(long, requires = "input", conflicts_with = "keypoints")]
    pub truth: Option<PathBuf>,
    /// Text file of `x y z` keypoints (one per line). Without it and without
    /// --truth, one keypoint per search-space supervoxel is used.
    #[arg(long, requires = "input")]
    pub keypoints: Option<PathBuf>,
    /// Output CSV.
    #[arg(long, required = true)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Phantom volume (NIfTI-1).
    #[arg(long, required = true)]
    pub output: Option<PathBuf>,
    /// Ground-truth lung mask (NIfTI-1).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Phantom description file; overrides --seed.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Seed of a randomised phantom.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the phantom description used here.
    #[arg(long)]
    pub write_spec: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained forest model (JSON).
    #[arg(long, required = true)]
    pub model: Option<PathBuf>,
    /// A `VOLUME:TRUTH` pair of NIfTI files; repeatable. Without any, phantoms are used.
    #[arg(long = "case", value_name = "VOLUME:TRUTH")]
    pub cases: Vec<String>,
    /// Number of phantoms to evaluate when no --case is given.
    #[arg(long, default_value_t = 20)]
    pub phantoms: usize,
    /// Seed of the first phantom.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report (JSON) here as well as to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SlicExportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Supervoxel label map (NIfTI-1, int32; 0 outside the region, ids from 1).
    #[arg(long, required = true)]
    pub output: Option<PathBuf>,
    /// Region to cluster. Defaults to the pipeline's search space.
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn split3<V: std::str::FromStr>(key: &str, s: &str) -> Result<[V; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Format {
            field: "cli",
            message: format!("`{key}` needs three comma-separated values, got {s:?}"),
        });
    }
    Ok([
        parse_value(key, parts[0])?,
        parse_value(key, parts[1])?,
        parse_value(key, parts[2])?,
    ])
}

fn load_volume(
    path: &Path,
    raw_dims: Option<&str>,
    raw_format: Option<&str>,
    raw_spacing: Option<&str>,
) -> Result<Volume<f64>> {
    match raw_dims {
        None => load_nifti(path),
        Some(d) => {
            let [nx, ny, nz] = split3::<usize>("raw-dims", d)?;
            let spacing = raw_spacing.map_or(Ok([1.0; 3]), |s| split3("raw-spacing", s))?;
            let format = raw_format.map_or(Ok(RawFormat::I16), str::parse)?;
            load_raw(path, Dims::new(nx, ny, nz), spacing, format)
        }
    }
}

impl InputArgs {
    fn load(&self) -> Result<Volume<f64>> {
        let path = self.input.as_deref().expect("clap enforces --input");
        load_volume(
            path,
            self.raw_dims.as_deref(),
            self.raw_format.as_deref(),
            self.raw_spacing.as_deref(),
        )
    }
}

fn required(p: &Option<PathBuf>) -> &Path {
    p.as_deref().expect("clap enforces required paths")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn echo(cfg: &RunConfig) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "# resolved configuration");
    let _ = write!(err, "{}", cfg.echo());
}

fn segment(a: &SegmentArgs, cfg: &RunConfig) -> Result<()> {
    let model = ForestModel::<f64>::load(required(&a.model))?;
    let vol = a.input.load()?;
    let res = run_pipeline(&vol, &model, &cfg.pipeline)?;
    save_mask_nifti(&res.final_mask, vol.spacing(), required(&a.output))?;
    if let Some(p) = &a.initial_output {
        save_mask_nifti(&res.initial_mask, vol.spacing(), p)?;
    }
    if let Some(p) = &a.report {
        write_text(p, &res.report.to_json()?)?;
    }
    log::info!(
        "initial {} voxels, final {} voxels, total {:.1} ms",
        res.report.initial_voxels,
        res.report.final_voxels,
        res.report.timings.total_millis()
    );
    Ok(())
}

fn read_csv(path: &Path) -> Result<Vec<FeatureRecord<f64>>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_csv(BufReader::new(f))
}

fn phantom_records(cfg: &RunConfig) -> Result<Vec<FeatureRecord<f64>>> {
    let t = &cfg.training;
    phantom_training_records(t.phantoms, t.seed, t.positives, t.negatives, &cfg.pipeline)
}

fn train_cmd(a: &TrainArgs, cfg: &RunConfig) -> Result<()> {
    let records = if a.features.is_empty() {
        phantom_records(cfg)?
    } else {
        let mut all = Vec::new();
        for p in &a.features {
            all.extend(read_csv(p)?);
        }
        all
    };
    let data = TrainingSet::from_records(&records)?;
    let [neg, pos] = data.class_counts();
    log::info!("training on {} rows ({pos} pathological, {neg} not)", data.len());
    let model = train(&data, &cfg.forest)?;
    model.save(required(&a.output))?;
    let oob = model.oob_accuracy(&data)?;
    println!(
        "{}",
        serde_json::to_string(&oob).map_err(|e| Error::Internal(format!("serializing OOB report: {e}")))?
    );
    Ok(())
}

fn read_keypoints(path: &Path, dims: Dims) -> Result<Vec<[usize; 3]>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in text.lines().map(|l| l.split('#').next().unwrap().trim()) {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let p = split3::<usize>("keypoints", &cols.join(","))?;
        if p[0] >= dims.nx || p[1] >= dims.ny || p[2] >= dims.nz {
            return Err(Error::Input(format!("keypoint {p:?} outside volume {dims}")));
        }
        out.push(p);
    }
    Ok(out)
}

fn features_cmd(a: &FeaturesArgs, cfg: &RunConfig) -> Result<()> {
    let p = &cfg.pipeline;
    let records = match &a.input {
        None => phantom_records(cfg)?,
        Some(path) => {
            let vol = load_volume(
                path,
                a.raw_dims.as_deref(),
                a.raw_format.as_deref(),
                a.raw_spacing.as_deref(),
            )?;
            if let Some(t) = &a.truth {
                let (truth, _) = load_mask_nifti(t)?;
                let tp = &cfg.training;
                training_records(&vol, &truth, p, tp.positives, tp.negatives, tp.seed)?
            } else {
                let points = match &a.keypoints {
                    Some(k) => read_keypoints(k, vol.dims())?,
                    None => search_space_supervoxels(&vol, cfg)?.1,
                };
                points
                    .into_iter()
                    .map(|kp| {
                        Ok(FeatureRecord {
                            keypoint: kp,
                            features: extract_descriptor(&vol, kp, &p.texture)?,
                            label: None,
                        })
                    })
                    .collect::<Result<_>>()?
            }
        }
    };
    let out = required(&a.output);
    let f = fs::File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_feature_csv(&mut w, &records).map_err(|e| Error::io(out, e))?;
    w.flush().map_err(|e| Error::io(out, e))?;
    log::info!("wrote {} feature rows", records.len());
    Ok(())
}

/// Supervoxels of the search space and one keypoint per supervoxel.
fn search_space_supervoxels(
    vol: &Volume<f64>,
    cfg: &RunConfig,
) -> Result<(crate::slic::SupervoxelMap<f64>, Vec<[usize; 3]>)> {
    let p = &cfg.pipeline;
    let one = stage_one(vol, p, &mut Timings::default())?;
    let ss = build_search_space(vol, &one.fc_mask, p.bone_hu)?;
    slic_on(vol, &ss.mask, cfg)
}

fn slic_on(
    vol: &Volume<f64>,
    region: &LabelMask,
    cfg: &RunConfig,
) -> Result<(crate::slic::SupervoxelMap<f64>, Vec<[usize; 3]>)> {
    let p = &cfg.pipeline;
    let n = region.count();
    if n == 0 {
        return Err(Error::Input("region to cluster is empty".into()));
    }
    let map = run_slic(vol, region, &p.slic_params(p.slic_k.unwrap_or_else(|| p.k_for(n))))?;
    let points = centroids(&map).into_iter().map(|(_, c)| c).collect();
    Ok((map, points))
}

fn phantom_cmd(a: &PhantomArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => PhantomSpec::load(p)?,
        None => PhantomSpec::random(a.seed),
    };
    let ph = generate_phantom(&spec)?;
    save_volume_nifti(&ph.volume, required(&a.output))?;
    if let Some(t) = &a.truth {
        save_mask_nifti(&ph.truth, spec.spacing, t)?;
    }
    if let Some(p) = &a.write_spec {
        write_text(p, &spec.to_text())?;
    }
    log::info!(
        "phantom: {} lung voxels, {} pathological",
        ph.truth.count(),
        ph.pathology.count()
    );
    Ok(())
}

fn eval_cmd(a: &EvalArgs, cfg: &RunConfig) -> Result<()> {
    let model = ForestModel::<f64>::load(required(&a.model))?;
    let cases = if a.cases.is_empty() {
        if a.phantoms == 0 {
            return Err(Error::param("phantoms", "must be >= 1"));
        }
        phantom_cases(a.phantoms, a.seed)?
    } else {
        a.cases
            .iter()
            .map(|c| {
                let (v, t) = c
                    .rsplit_once(':')
                    .ok_or_else(|| Error::Input(format!("--case expects VOLUME:TRUTH, got {c:?}")))?;
                let (truth, _) = load_mask_nifti(t)?;
                Ok(EvalCase {
                    name: v.to_string(),
                    volume: load_nifti(Path::new(v))?,
                    truth,
                })
            })
            .collect::<Result<_>>()?
    };
    let report = batch_evaluate(&cases, &model, &cfg.pipeline)?;
    let json = report.to_json()?;
    println!("{json}");
    if let Some(p) = &a.report {
        write_text(p, &json)?;
    }
    Ok(())
}

fn slic_export(a: &SlicExportArgs, cfg: &RunConfig) -> Result<()> {
    let vol = a.input.load()?;
    let (map, _) = match &a.region {
        Some(r) => {
            let (region, _) = load_mask_nifti(r)?;
            if region.dims() != vol.dims() {
                return Err(Error::Input(format!(
                    "region dims {} differ from volume dims {}",
                    region.dims(),
                    vol.dims()
                )));
            }
            slic_on(&vol, &region, cfg)?
        }
        None => search_space_supervoxels(&vol, cfg)?,
    };
    save_labels_nifti(vol.dims(), vol.spacing(), &map.label_grid(), required(&a.output))?;
    log::info!("{} supervoxels (k requested {})", map.k_actual(), map.k_requested);
    Ok(())
}

fn config_args(cmd: &Command) -> &ConfigArgs {
    match cmd {
        Command::Segment(a) => &a.config,
        Command::Train(a) => &a.config,
        Command::Features(a) => &a.config,
        Command::Phantom(PhantomCommand::Generate(a)) => &a.config,
        Command::Eval(EvalCommand::Run(a)) => &a.config,
        Command::SlicExport(a) => &a.config,
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = config_args(&cli.command).resolve()?;
    echo(&cfg);
    let work = || match &cli.command {
        Command::Segment(a) => segment(a, &cfg),
        Command::Train(a) => train_cmd(a, &cfg),
        Command::Features(a) => features_cmd(a, &cfg),
        Command::Phantom(PhantomCommand::Generate(a)) => phantom_cmd(a),
        Command::Eval(EvalCommand::Run(a)) => eval_cmd(a, &cfg),
        Command::SlicExport(a) => slic_export(a, &cfg),
    };
    match cfg.threads {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Internal(format!("building thread pool: {e}")))?
            .install(work),
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}
