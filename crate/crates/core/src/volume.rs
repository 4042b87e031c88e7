//! Voxel grids: CT volumes, label masks, thresholding and raw little-endian I/O.
//!
//! All grids share one layout: row-major with `x` varying fastest, so the
//! linear index of `(x, y, z)` is `x + nx * (y + ny * z)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lowest representable attenuation; values below are clamped on load.
pub const HU_MIN: f64 = -1024.0;
/// Highest representable attenuation (12-bit CT range).
pub const HU_MAX: f64 = 3071.0;

/// Voxel counts along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.nx;
        let rest = idx / self.nx;
        [x, rest % self.ny, rest / self.ny]
    }

    /// Linear index for signed coordinates, `None` when outside the grid.
    #[inline]
    pub fn checked_index(&self, x: i64, y: i64, z: i64) -> Option<usize> {
        if x < 0 || y < 0 || z < 0 {
            return None;
        }
        let (x, y, z) = (x as usize, y as usize, z as usize);
        (x < self.nx && y < self.ny && z < self.nz).then(|| self.index(x, y, z))
    }

    /// Face (6-connected) neighbours of a voxel, in a fixed order.
    pub fn face_neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let [x, y, z] = self.coords(idx);
        let [x, y, z] = [x as i64, y as i64, z as i64];
        FACE_OFFSETS
            .iter()
            .filter_map(move |&[dx, dy, dz]| self.checked_index(x + dx, y + dy, z + dz))
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

pub(crate) const FACE_OFFSETS: [[i64; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

fn check_geometry(dims: Dims, spacing: [f64; 3]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::param(
            "dims",
            format!("all dimensions must be positive, got {dims}"),
        ));
    }
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::param(
            "spacing",
            format!("voxel spacing must be finite and positive, got {spacing:?}"),
        ));
    }
    Ok(())
}

/// CT volume of attenuation values in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: Dims,
    spacing: [f64; 3],
    data: Vec<T>,
}

impl<T: Scalar> Volume<T> {
    /// Builds a volume, clamping every value to `[HU_MIN, HU_MAX]`.
    ///
    /// Fails on a length mismatch, non-positive geometry or a non-finite value.
    pub fn from_hu(dims: Dims, spacing: [f64; 3], mut data: Vec<T>) -> Result<Self> {
        check_geometry(dims, spacing)?;
        if data.len() != dims.len() {
            return Err(Error::Input(format!(
                "volume of dims {dims} needs {} values, got {}",
                dims.len(),
                data.len()
            )));
        }
        let (lo, hi) = (T::of(HU_MIN), T::of(HU_MAX));
        for (i, v) in data.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::Input(format!("non-finite HU value at voxel {i}")));
            }
            *v = v.max(lo).min(hi);
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn filled(dims: Dims, spacing: [f64; 3], value: T) -> Result<Self> {
        Self::from_hu(dims, spacing, vec![value; dims.len()])
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.dims.index(x, y, z)]
    }

    /// Value at signed coordinates with replicate (clamp-to-edge) padding.
    #[inline]
    pub fn at_clamped(&self, x: i64, y: i64, z: i64) -> T {
        let cx = x.clamp(0, self.dims.nx as i64 - 1) as usize;
        let cy = y.clamp(0, self.dims.ny as i64 - 1) as usize;
        let cz = z.clamp(0, self.dims.nz as i64 - 1) as usize;
        self.at(cx, cy, cz)
    }

    /// Converts to another scalar precision.
    pub fn cast<U: Scalar>(&self) -> Volume<U> {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Per-voxel small integer labels aligned to a [`Volume`]. Binary masks use `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    dims: Dims,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            labels: vec![0; dims.len()],
        }
    }

    pub fn from_labels(dims: Dims, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::Input(format!(
                "mask of dims {dims} needs {} labels, got {}",
                dims.len(),
                labels.len()
            )));
        }
        Ok(Self { dims, labels })
    }

    /// Binary mask from a per-voxel predicate over linear indices.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize) -> bool) -> Self {
        Self {
            dims,
            labels: (0..dims.len()).map(|i| f(i) as u8).collect(),
        }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, idx: usize) -> u8 {
        self.labels[idx]
    }

    #[inline]
    pub fn is_set(&self, idx: usize) -> bool {
        self.labels[idx] != 0
    }

    #[inline]
    pub fn set(&mut self, idx: usize, label: u8) {
        self.labels[idx] = label;
    }

    pub fn count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.labels.iter().all(|&l| l <= 1)
    }

    /// Linear indices of all nonzero voxels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l != 0).then_some(i))
            .collect()
    }

    fn zip_with(&self, other: &LabelMask, f: impl Fn(bool, bool) -> bool) -> Result<LabelMask> {
        if self.dims != other.dims {
            return Err(Error::Input(format!(
                "mask dims differ: {} vs {}",
                self.dims, other.dims
            )));
        }
        Ok(LabelMask::from_fn(self.dims, |i| f(self.is_set(i), other.is_set(i))))
    }

    pub fn union(&self, other: &LabelMask) -> Result<LabelMask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &LabelMask) -> Result<LabelMask> {
        self.zip_with(other, |a, b| a && b)
    }

    /// Voxels set in `self` but not in `other`.
    pub fn difference(&self, other: &LabelMask) -> Result<LabelMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    /// True when every voxel set here is also set in `other`.
    pub fn is_subset_of(&self, other: &LabelMask) -> bool {
        self.dims == other.dims && self.labels.iter().zip(&other.labels).all(|(&a, &b)| a == 0 || b != 0)
    }
}

/// Closed-band threshold: label 1 iff `center - halfwidth <= v <= center + halfwidth`.
pub fn threshold<T: Scalar>(vol: &Volume<T>, center: T, halfwidth: T) -> Result<LabelMask> {
    if !(halfwidth >= T::zero()) {
        return Err(Error::param("halfwidth", format!("must be >= 0, got {halfwidth}")));
    }
    let (lo, hi) = (center - halfwidth, center + halfwidth);
    Ok(LabelMask::from_fn(vol.dims(), |i| {
        let v = vol.data[i];
        v >= lo && v <= hi
    }))
}

/// On-disk scalar encoding of a raw volume file; always little-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawFormat {
    I16,
    U16,
    F32,
    F64,
}

impl RawFormat {
    pub fn width(self) -> usize {
        match self {
            RawFormat::I16 | RawFormat::U16 => 2,
            RawFormat::F32 => 4,
            RawFormat::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            RawFormat::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            RawFormat::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            RawFormat::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            RawFormat::F64 => f64::from_le_bytes(b.try_into().expect("8-byte chunk")),
        }
    }

    fn encode(self, v: f64, out: &mut Vec<u8>) {
        match self {
            RawFormat::I16 => out.extend_from_slice(&(v.round() as i16).to_le_bytes()),
            RawFormat::U16 => out.extend_from_slice(&(v.round() as u16).to_le_bytes()),
            RawFormat::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            RawFormat::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
}

impl std::str::FromStr for RawFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i16" | "int16" => Ok(RawFormat::I16),
            "u16" | "uint16" => Ok(RawFormat::U16),
            "f32" | "float32" => Ok(RawFormat::F32),
            "f64" | "float64" => Ok(RawFormat::F64),
            other => Err(Error::param(
                "raw-format",
                format!("unknown scalar format `{other}` (expected i16, u16, f32 or f64)"),
            )),
        }
    }
}

/// Reads a headerless little-endian volume.
pub fn load_raw<T: Scalar>(
    path: impl AsRef<Path>,
    dims: Dims,
    spacing: [f64; 3],
    format: RawFormat,
) -> Result<Volume<T>> {
    let path = path.as_ref();
    check_geometry(dims, spacing)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = (dims.len() * format.width()) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = bytes
        .chunks_exact(format.width())
        .map(|c| T::of(format.decode(c)))
        .collect();
    Volume::from_hu(dims, spacing, data)
}

pub fn save_raw<T: Scalar>(vol: &Volume<T>, path: impl AsRef<Path>, format: RawFormat) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(vol.data().len() * format.width());
    for v in vol.data() {
        format.encode(v.as_f64(), &mut bytes);
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(dims: Dims, data: Vec<f64>) -> Volume<f64> {
        Volume::from_hu(dims, [1.0; 3], data).unwrap()
    }

    #[test]
    fn threshold_constant_parenchyma_is_all_ones() {
        let v = Volume::<f64>::filled(Dims::new(3, 3, 3), [1.0; 3], -550.0).unwrap();
        let m = threshold(&v, -550.0, 150.0).unwrap();
        assert_eq!(m.count(), 27);
    }

    #[test]
    fn threshold_soft_tissue_is_all_zeros() {
        let v = Volume::<f64>::filled(Dims::new(3, 3, 3), [1.0; 3], 0.0).unwrap();
        assert_eq!(threshold(&v, -550.0, 150.0).unwrap().count(), 0);
    }

    #[test]
    fn threshold_band_is_closed() {
        let v = vol(Dims::new(4, 1, 1), vec![-700.0, -300.0, -400.0, -700.5]);
        let m = threshold(&v, -550.0, 150.0).unwrap();
        assert_eq!(m.labels(), &[1, 0, 1, 0]);
    }

    #[test]
    fn threshold_rejects_negative_halfwidth() {
        let v = vol(Dims::new(1, 1, 1), vec![0.0]);
        assert!(matches!(
            threshold(&v, 0.0, -1.0),
            Err(Error::Parameter { name: "halfwidth", .. })
        ));
    }

    #[test]
    fn from_hu_clamps_and_validates() {
        let v = vol(Dims::new(3, 1, 1), vec![5000.0, -3000.0, 12.0]);
        assert_eq!(v.data(), &[HU_MAX, HU_MIN, 12.0]);
        assert!(Volume::from_hu(Dims::new(2, 1, 1), [1.0; 3], vec![0.0f64]).is_err());
        assert!(Volume::from_hu(Dims::new(1, 1, 1), [1.0; 3], vec![f64::NAN]).is_err());
        assert!(Volume::from_hu(Dims::new(1, 1, 1), [0.0, 1.0, 1.0], vec![0.0f64]).is_err());
        assert!(Volume::<f64>::from_hu(Dims::new(0, 1, 1), [1.0; 3], vec![]).is_err());
    }

    #[test]
    fn index_coords_roundtrip() {
        let d = Dims::new(3, 4, 5);
        for i in 0..d.len() {
            let [x, y, z] = d.coords(i);
            assert_eq!(d.index(x, y, z), i);
        }
        assert_eq!(d.index(1, 0, 0), 1);
        assert_eq!(d.index(0, 1, 0), 3);
        assert_eq!(d.index(0, 0, 1), 12);
    }

    #[test]
    fn face_neighbors_at_corner_and_interior() {
        let d = Dims::new(3, 3, 3);
        assert_eq!(d.face_neighbors(0).count(), 3);
        assert_eq!(d.face_neighbors(d.index(1, 1, 1)).count(), 6);
    }

    #[test]
    fn raw_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.raw");
        let bytes: Vec<u8> = std::iter::repeat((-550i16).to_le_bytes()).take(8).flatten().collect();
        fs::write(&p, &bytes).unwrap();
        let v: Volume<f64> = load_raw(&p, Dims::new(2, 2, 2), [1.0; 3], RawFormat::I16).unwrap();
        assert!(v.data().iter().all(|&x| x == -550.0));

        fs::write(&p, &bytes[..14]).unwrap();
        match load_raw::<f64>(&p, Dims::new(2, 2, 2), [1.0; 3], RawFormat::I16) {
            Err(Error::SizeMismatch { expected, actual, .. }) => {
                assert_eq!((expected, actual), (16, 14));
            }
            other => panic!("expected size mismatch, got {other:?}"),
        }

        let mut big = bytes.clone();
        big[0..2].copy_from_slice(&5000i16.to_le_bytes());
        fs::write(&p, &big).unwrap();
        let v: Volume<f32> = load_raw(&p, Dims::new(2, 2, 2), [1.0; 3], RawFormat::I16).unwrap();
        assert_eq!(v.data()[0], 3071.0);

        assert!(matches!(
            load_raw::<f64>(dir.path().join("missing"), Dims::new(1, 1, 1), [1.0; 3], RawFormat::F32),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn mask_set_operations() {
        let d = Dims::new(4, 1, 1);
        let a = LabelMask::from_labels(d, vec![1, 1, 0, 0]).unwrap();
        let b = LabelMask::from_labels(d, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(a.union(&b).unwrap().labels(), &[1, 1, 1, 0]);
        assert_eq!(a.intersection(&b).unwrap().labels(), &[0, 1, 0, 0]);
        assert_eq!(a.difference(&b).unwrap().labels(), &[1, 0, 0, 0]);
        assert!(a.intersection(&b).unwrap().is_subset_of(&a));
        assert!(!a.is_subset_of(&b));
        assert!(a.union(&LabelMask::zeros(Dims::new(2, 2, 1))).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_volume() -> impl Strategy<Value = Volume<f64>> {
            (1usize..5, 1usize..5, 1usize..4).prop_flat_map(|(nx, ny, nz)| {
                proptest::collection::vec(-1024i32..3072, nx * ny * nz).prop_map(move |vals| {
                    Volume::from_hu(
                        Dims::new(nx, ny, nz),
                        [0.7, 0.7, 2.5],
                        vals.into_iter().map(f64::from).collect(),
                    )
                    .unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn threshold_count_monotone_in_halfwidth(v in arb_volume(), c in -1024.0f64..3071.0, h1 in 0.0f64..2000.0, dh in 0.0f64..500.0) {
                let small = threshold(&v, c, h1).unwrap();
                let large = threshold(&v, c, h1 + dh).unwrap();
                prop_assert!(small.is_subset_of(&large));
                prop_assert!(small.count() <= large.count());
            }

            #[test]
            fn threshold_idempotent_on_own_output(v in arb_volume(), h in 0.0f64..1000.0) {
                let center = -550.0;
                let m = threshold(&v, center, h).unwrap();
                let relabeled: Vec<f64> = m.labels().iter().map(|&l| if l == 1 { center } else { HU_MIN }).collect();
                let rv = Volume::from_hu(v.dims(), v.spacing(), relabeled).unwrap();
                let again = threshold(&rv, center, h).unwrap();
                // -1024 can land inside a very wide band; restrict to bands that exclude it
                if center - h > HU_MIN {
                    prop_assert_eq!(again, m);
                }
            }

            #[test]
            fn raw_roundtrip_is_bit_exact(v in arb_volume()) {
                let dir = tempfile::tempdir().unwrap();
                for fmt in [RawFormat::I16, RawFormat::F32, RawFormat::F64] {
                    let p = dir.path().join("rt.raw");
                    save_raw(&v, &p, fmt).unwrap();
                    let back: Volume<f64> = load_raw(&p, v.dims(), v.spacing(), fmt).unwrap();
                    prop_assert_eq!(&back, &v);
                }
            }
        }
    }
}
