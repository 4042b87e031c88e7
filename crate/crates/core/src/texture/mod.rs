//! The 24-element local texture descriptor: 7 GLCM, 11 GLRLM and 6 histogram
//! features computed on a 7x7 axial window around a keypoint.
//!
//! Intensities are quantized over the fixed global HU range, never per
//! window, so descriptors of different windows stay comparable in absolute
//! attenuation.

mod glcm;
mod glrlm;
mod histogram;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use glcm::{glcm, glcm_counts, glcm_features, Glcm};
pub use glrlm::{glrlm, glrlm_features, RunLengthMatrix};
pub use histogram::histogram_features;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volume::{Volume, HU_MAX, HU_MIN};

pub const N_FEATURES: usize = 24;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "Energy",
    "Entropy",
    "Correlation",
    "IDM",
    "Inertia",
    "CS",
    "CP", // GLCM
    "SRE",
    "LRE",
    "GLN",
    "RLN",
    "RP",
    "LGRE",
    "HGRE",
    "SRLGE",
    "SRHGE",
    "LRLGE",
    "LRHGE", // GLRLM
    "Mean",
    "Variance",
    "Skewness",
    "Kurtosis",
    "Min",
    "Max", // histogram
];

/// Unit steps for 0°, 45°, 90° and 135° in window (x right, y down) coordinates.
pub(crate) const DIRECTIONS: [(i64, i64); 4] = [(1, 0), (1, -1), (0, -1), (-1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T>(pub [T; N_FEATURES]);

impl<T: Scalar> FeatureVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn get(&self, name: &str) -> Option<T> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    pub glcm_bins: usize,
    pub glcm_directions: usize,
    pub glcm_offset: usize,
    pub glrlm_directions: usize,
    pub glrlm_levels: usize,
    /// Side of the square axial window.
    pub window: usize,
    pub hu_min: f64,
    pub hu_max: f64,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            glcm_bins: 16,
            glcm_directions: 4,
            glcm_offset: 2,
            glrlm_directions: 4,
            glrlm_levels: 8,
            window: 7,
            hu_min: HU_MIN,
            hu_max: HU_MAX,
        }
    }
}

impl TextureParams {
    pub fn validate(&self) -> Result<()> {
        if self.glcm_bins < 2 || self.glcm_bins > u16::MAX as usize {
            return Err(Error::param(
                "glcm-bins",
                format!("must be >= 2, got {}", self.glcm_bins),
            ));
        }
        if self.glrlm_levels < 2 || self.glrlm_levels > u16::MAX as usize {
            return Err(Error::param(
                "glrlm-levels",
                format!("must be >= 2, got {}", self.glrlm_levels),
            ));
        }
        if self.glcm_offset == 0 {
            return Err(Error::param("glcm-offset", "must be >= 1"));
        }
        if !(1..=4).contains(&self.glcm_directions) || !(1..=4).contains(&self.glrlm_directions) {
            return Err(Error::param("directions", "direction counts must lie in 1..=4"));
        }
        if self.window % 2 == 0 {
            return Err(Error::param("window", format!("must be odd, got {}", self.window)));
        }
        if !(self.hu_max > self.hu_min) {
            return Err(Error::param("hu-range", "upper bound must exceed lower bound"));
        }
        Ok(())
    }
}

/// Raw intensities of a rectangular 2D window, row-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Window<T> {
    pub width: usize,
    pub height: usize,
    pub values: Vec<T>,
}

/// Gray-level indices of a window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedWindow {
    pub width: usize,
    pub height: usize,
    pub bins: Vec<u16>,
}

impl QuantizedWindow {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u16 {
        self.bins[x + self.width * y]
    }
}

/// Uniform binning of `[lo, hi]` into `n_levels` bins; the top edge belongs to
/// the last bin and out-of-range values clamp to the end bins.
pub fn quantize_value<T: Scalar>(v: T, n_levels: usize, lo: f64, hi: f64) -> u16 {
    let t = (v.as_f64() - lo) / (hi - lo);
    let b = (t * n_levels as f64).floor();
    b.clamp(0.0, (n_levels - 1) as f64) as u16
}

pub fn quantize<T: Scalar>(w: &Window<T>, n_levels: usize, lo: f64, hi: f64) -> QuantizedWindow {
    QuantizedWindow {
        width: w.width,
        height: w.height,
        bins: w.values.iter().map(|&v| quantize_value(v, n_levels, lo, hi)).collect(),
    }
}

/// The axial `side x side` window centred on `keypoint`, replicate-padded at the borders.
pub fn axial_window<T: Scalar>(vol: &Volume<T>, keypoint: [usize; 3], side: usize) -> Window<T> {
    let r = (side / 2) as i64;
    let [kx, ky, kz] = keypoint.map(|c| c as i64);
    let mut values = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            values.push(vol.at_clamped(kx + dx, ky + dy, kz));
        }
    }
    Window {
        width: side,
        height: side,
        values,
    }
}

/// Full descriptor of a raw window.
pub fn window_features<T: Scalar>(w: &Window<T>, params: &TextureParams) -> Result<FeatureVector<T>> {
    if w.values.is_empty() || w.values.len() != w.width * w.height {
        return Err(Error::DegenerateWindow(format!(
            "{}x{} window holds {} values",
            w.width,
            w.height,
            w.values.len()
        )));
    }
    let q16 = quantize(w, params.glcm_bins, params.hu_min, params.hu_max);
    let m = glcm::<T>(&q16, params.glcm_bins, params.glcm_offset, params.glcm_directions)?;
    let q8 = quantize(w, params.glrlm_levels, params.hu_min, params.hu_max);
    let r = glrlm(&q8, params.glrlm_levels, params.glrlm_directions);

    let mut out = [T::zero(); N_FEATURES];
    out[..7].copy_from_slice(&glcm_features(&m));
    out[7..18].copy_from_slice(&glrlm_features::<T>(&r));
    out[18..].copy_from_slice(&histogram_features(&w.values));
    Ok(FeatureVector(out))
}

/// Descriptor at a keypoint: the axial window around it, then [`window_features`].
pub fn extract_descriptor<T: Scalar>(
    vol: &Volume<T>,
    keypoint: [usize; 3],
    params: &TextureParams,
) -> Result<FeatureVector<T>> {
    let d = vol.dims();
    if keypoint[0] >= d.nx || keypoint[1] >= d.ny || keypoint[2] >= d.nz {
        return Err(Error::Input(format!("keypoint {keypoint:?} outside volume {d}")));
    }
    window_features(&axial_window(vol, keypoint, params.window), params)
}

/// One row of the feature interchange CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord<T> {
    pub keypoint: [usize; 3],
    pub features: FeatureVector<T>,
    /// 1 = pathological, 0 = non-pathological, `None` = unlabelled.
    pub label: Option<u8>,
}

/// CSV header: `x,y,z,label` followed by the 24 feature names.
pub fn csv_header() -> String {
    let mut cols = vec!["x", "y", "z", "label"];
    cols.extend(FEATURE_NAMES);
    cols.join(",")
}

pub fn write_feature_csv<T: Scalar, W: Write>(mut out: W, rows: &[FeatureRecord<T>]) -> std::io::Result<()> {
    writeln!(out, "{}", csv_header())?;
    for r in rows {
        let label = r.label.map(|l| l.to_string()).unwrap_or_default();
        write!(out, "{},{},{},{}", r.keypoint[0], r.keypoint[1], r.keypoint[2], label)?;
        for v in r.features.as_slice() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_feature_csv<T: Scalar, R: BufRead>(input: R) -> Result<Vec<FeatureRecord<T>>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::Input(format!("reading CSV header: {e}")))?
        .ok_or_else(|| Error::Input("empty feature CSV".into()))?;
    if header.trim() != csv_header() {
        return Err(Error::Input(format!("unexpected feature CSV header: {header}")));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Input(format!("reading CSV line {}: {e}", n + 2)))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Input(format!("CSV line {}: {what}", n + 2));
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 4 + N_FEATURES {
            return Err(bad(&format!(
                "expected {} columns, found {}",
                4 + N_FEATURES,
                cols.len()
            )));
        }
        let mut keypoint = [0usize; 3];
        for a in 0..3 {
            keypoint[a] = cols[a].parse().map_err(|_| bad("bad coordinate"))?;
        }
        let label = match cols[3] {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            _ => return Err(bad("label must be 0, 1 or empty")),
        };
        let mut f = [T::zero(); N_FEATURES];
        for (k, c) in cols[4..].iter().enumerate() {
            let v: f64 = c
                .parse()
                .map_err(|_| bad(&format!("bad value for {}", FEATURE_NAMES[k])))?;
            f[k] = T::of(v);
        }
        rows.push(FeatureRecord {
            keypoint,
            features: FeatureVector(f),
            label,
        });
    }
    Ok(rows)
}
