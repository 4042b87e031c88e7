//! Run configuration: built-in defaults, overridden by a flat `key = value`
//! file, overridden by command-line flags.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::pipeline::PipelineConfig;

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
/// Keys are normalised to lowercase with `_` replaced by `-`.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            field: "config",
            message: format!("line {}: expected `key = value`, got {raw:?}", n + 1),
        })?;
        let key = k.trim().to_ascii_lowercase().replace('_', "-");
        if key.is_empty() {
            return Err(Error::Format {
                field: "config",
                message: format!("line {}: empty key", n + 1),
            });
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| Error::Format {
        field: "config",
        message: format!("`{key}`: cannot parse {value:?}"),
    })
}

/// `auto` (or empty) means `None`.
fn parse_auto<V: FromStr>(key: &str, value: &str) -> Result<Option<V>> {
    if value.is_empty() || value.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn show_auto<V: ToString>(v: Option<V>) -> String {
    v.map_or_else(|| "auto".to_string(), |v| v.to_string())
}

/// How labelled keypoints are drawn from training phantoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub positives: usize,
    pub negatives: usize,
    pub phantoms: usize,
    pub seed: u64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            positives: 507,
            negatives: 490,
            phantoms: 16,
            seed: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub forest: ForestParams,
    pub training: TrainingParams,
    /// Worker thread cap; `None` lets the thread pool decide.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.to_ascii_lowercase().replace('_', "-");
        let p = &mut self.pipeline;
        let f = &mut self.forest;
        let t = &mut self.training;
        let k = key.as_str();
        match k {
            "band-center" => p.band_center = parse_value(k, value)?,
            "band-halfwidth" => p.band_halfwidth = parse_value(k, value)?,
            "fc-mean" => p.fc_mean = parse_value(k, value)?,
            "fc-sigma" => p.fc_sigma = parse_value(k, value)?,
            "fc-theta" => p.fc_theta = parse_value(k, value)?,
            "seed-rng" => p.seed_rng = parse_value(k, value)?,
            "seed-candidates" => p.seed_candidates = parse_value(k, value)?,
            "bone-hu" => p.bone_hu = parse_value(k, value)?,
            "slic-k" => p.slic_k = parse_auto(k, value)?,
            "supervoxel-size" => p.supervoxel_size = parse_value(k, value)?,
            "slic-compactness" => p.slic_compactness = parse_value(k, value)?,
            "slic-max-iters" => p.slic_max_iters = parse_value(k, value)?,
            "slic-tol" => p.slic_tol = parse_value(k, value)?,
            "glcm-bins" => p.texture.glcm_bins = parse_value(k, value)?,
            "glcm-offset" => p.texture.glcm_offset = parse_value(k, value)?,
            "glcm-directions" => p.texture.glcm_directions = parse_value(k, value)?,
            "glrlm-levels" => p.texture.glrlm_levels = parse_value(k, value)?,
            "glrlm-directions" => p.texture.glrlm_directions = parse_value(k, value)?,
            "window" => p.texture.window = parse_value(k, value)?,
            "rf-threshold" => p.rf_threshold = parse_value(k, value)?,
            "per-voxel" => p.per_voxel = parse_value(k, value)?,
            "rf-trees" => f.n_trees = parse_value(k, value)?,
            "rf-bag-fraction" => f.bag_fraction = parse_value(k, value)?,
            "rf-bootstrap" => f.bootstrap = parse_value(k, value)?,
            "rf-max-features" => f.max_features = parse_auto(k, value)?,
            "rf-seed" => f.rng_seed = parse_value(k, value)?,
            "train-positives" => t.positives = parse_value(k, value)?,
            "train-negatives" => t.negatives = parse_value(k, value)?,
            "train-phantoms" => t.phantoms = parse_value(k, value)?,
            "train-seed" => t.seed = parse_value(k, value)?,
            "threads" => self.threads = parse_auto(k, value)?,
            _ => {
                return Err(Error::Format {
                    field: "config",
                    message: format!("unknown key `{key}`"),
                })
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply(&parse_kv(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.forest.validate()?;
        if self.training.phantoms == 0 {
            return Err(Error::param("train-phantoms", "must be >= 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::param("threads", "must be >= 1"));
        }
        Ok(())
    }

    /// Every resolved parameter as `key = value` lines; feeding the text back
    /// through [`parse_kv`] and [`RunConfig::apply`] reproduces the config.
    pub fn echo(&self) -> String {
        let p = &self.pipeline;
        let f = &self.forest;
        let t = &self.training;
        let rows: Vec<(&str, String)> = vec![
            ("band-center", p.band_center.to_string()),
            ("band-halfwidth", p.band_halfwidth.to_string()),
            ("fc-mean", p.fc_mean.to_string()),
            ("fc-sigma", p.fc_sigma.to_string()),
            ("fc-theta", p.fc_theta.to_string()),
            ("seed-rng", p.seed_rng.to_string()),
            ("seed-candidates", p.seed_candidates.to_string()),
            ("bone-hu", p.bone_hu.to_string()),
            ("slic-k", show_auto(p.slic_k)),
            ("supervoxel-size", p.supervoxel_size.to_string()),
            ("slic-compactness", p.slic_compactness.to_string()),
            ("slic-max-iters", p.slic_max_iters.to_string()),
            ("slic-tol", p.slic_tol.to_string()),
            ("glcm-bins", p.texture.glcm_bins.to_string()),
            ("glcm-offset", p.texture.glcm_offset.to_string()),
            ("glcm-directions", p.texture.glcm_directions.to_string()),
            ("glrlm-levels", p.texture.glrlm_levels.to_string()),
            ("glrlm-directions", p.texture.glrlm_directions.to_string()),
            ("window", p.texture.window.to_string()),
            ("rf-threshold", p.rf_threshold.to_string()),
            ("per-voxel", p.per_voxel.to_string()),
            ("rf-trees", f.n_trees.to_string()),
            ("rf-bag-fraction", f.bag_fraction.to_string()),
            ("rf-bootstrap", f.bootstrap.to_string()),
            ("rf-max-features", show_auto(f.max_features)),
            ("rf-seed", f.rng_seed.to_string()),
            ("train-positives", t.positives.to_string()),
            ("train-negatives", t.negatives.to_string()),
            ("train-phantoms", t.phantoms.to_string()),
            ("train-seed", t.seed.to_string()),
            ("threads", show_auto(self.threads)),
        ];
        let mut s = String::new();
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
