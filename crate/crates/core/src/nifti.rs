//! Minimal single-file NIfTI-1 (`.nii`, optionally gzipped) reader and writer.
//!
//! Only 3D volumes are supported. Volumes load from `int16` or `float32`
//! data; label grids additionally accept `uint8` and `int32`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::volume::{Dims, LabelMask, Volume};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const VOX_OFFSET: usize = 352;
pub const MAGIC: &[u8; 4] = b"n+1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i16)]
pub enum Datatype {
    Uint8 = 2,
    Int16 = 4,
    Int32 = 8,
    Float32 = 16,
}

impl Datatype {
    fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(Datatype::Uint8),
            4 => Some(Datatype::Int16),
            8 => Some(Datatype::Int32),
            16 => Some(Datatype::Float32),
            _ => None,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Int32 | Datatype::Float32 => 4,
        }
    }
}

/// The header fields this crate reads or writes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dims: Dims,
    pub spacing: [f64; 3],
    pub datatype: Datatype,
    pub vox_offset: usize,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub big_endian: bool,
}

impl NiftiHeader {
    pub fn new(dims: Dims, spacing: [f64; 3], datatype: Datatype) -> Self {
        Self {
            dims,
            spacing,
            datatype,
            vox_offset: VOX_OFFSET,
            scl_slope: 1.0,
            scl_inter: 0.0,
            big_endian: false,
        }
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::Format {
                field: "sizeof_hdr",
                message: format!("file has only {} bytes, header needs {HEADER_SIZE}", bytes.len()),
            });
        }
        let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
        let big_endian = match (le, be) {
            (348, _) => false,
            (_, 348) => true,
            _ => {
                return Err(Error::Format {
                    field: "sizeof_hdr",
                    message: format!("expected 348, found {le}"),
                })
            }
        };
        let r = FieldReader { bytes, big_endian };

        if &bytes[344..348] != MAGIC {
            return Err(Error::Format {
                field: "magic",
                message: format!(
                    "expected \"n+1\", found {:?}",
                    String::from_utf8_lossy(&bytes[344..348])
                ),
            });
        }

        let dim: Vec<i16> = (0..8).map(|i| r.i16(40 + 2 * i)).collect();
        if dim[0] != 3 {
            return Err(Error::Format {
                field: "dim[0]",
                message: format!("only 3D volumes are supported, found dim[0] = {}", dim[0]),
            });
        }
        if dim[1..4].iter().any(|&d| d < 1) {
            return Err(Error::Format {
                field: "dim",
                message: format!("non-positive extent in {:?}", &dim[1..4]),
            });
        }
        let dims = Dims::new(dim[1] as usize, dim[2] as usize, dim[3] as usize);

        let code = r.i16(70);
        let datatype = Datatype::from_code(code).ok_or_else(|| Error::Format {
            field: "datatype",
            message: format!("unsupported datatype code {code}"),
        })?;

        let pix = |i: usize| r.f32(76 + 4 * i) as f64;
        let spacing = [pix(1), pix(2), pix(3)].map(|s| s.abs());
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Format {
                field: "pixdim",
                message: format!("voxel spacing must be positive, found {spacing:?}"),
            });
        }

        let vox = r.f32(108);
        if !(vox.is_finite() && vox >= HEADER_SIZE as f32) {
            return Err(Error::Format {
                field: "vox_offset",
                message: format!("invalid data offset {vox}"),
            });
        }

        Ok(Self {
            dims,
            spacing,
            datatype,
            vox_offset: vox as usize,
            scl_slope: r.f32(112),
            scl_inter: r.f32(116),
            big_endian,
        })
    }

    /// Serializes a little-endian header followed by an empty extension flag.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut h = vec![0u8; VOX_OFFSET];
        let mut put = |off: usize, b: &[u8]| h[off..off + b.len()].copy_from_slice(b);
        put(0, &348i32.to_le_bytes());
        let d = self.dims;
        let dim: [i16; 8] = [3, d.nx as i16, d.ny as i16, d.nz as i16, 1, 1, 1, 1];
        for (i, v) in dim.iter().enumerate() {
            put(40 + 2 * i, &v.to_le_bytes());
        }
        put(70, &(self.datatype as i16).to_le_bytes());
        put(72, &((self.datatype.width() * 8) as i16).to_le_bytes());
        let pixdim: [f32; 8] = [
            1.0,
            self.spacing[0] as f32,
            self.spacing[1] as f32,
            self.spacing[2] as f32,
            0.0,
            0.0,
            0.0,
            0.0,
        ];
        for (i, v) in pixdim.iter().enumerate() {
            put(76 + 4 * i, &v.to_le_bytes());
        }
        put(108, &(VOX_OFFSET as f32).to_le_bytes());
        put(112, &self.scl_slope.to_le_bytes());
        put(116, &self.scl_inter.to_le_bytes());
        // xyzt_units: millimetres
        put(123, &[2u8]);
        // sform_code = scanner, diagonal affine from the spacing
        put(254, &1i16.to_le_bytes());
        for (row, off) in [280usize, 296, 312].into_iter().enumerate() {
            put(off + 4 * row, &(self.spacing[row] as f32).to_le_bytes());
        }
        put(344, MAGIC);
        h
    }

    fn data_len(&self) -> usize {
        self.dims.len() * self.datatype.width()
    }
}

struct FieldReader<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl FieldReader<'_> {
    fn arr<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut a: [u8; N] = self.bytes[off..off + N].try_into().unwrap();
        if self.big_endian {
            a.reverse();
        }
        a
    }

    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes(self.arr(off))
    }

    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.arr(off))
    }

    fn value(&self, dt: Datatype, off: usize) -> f64 {
        match dt {
            Datatype::Uint8 => self.bytes[off] as f64,
            Datatype::Int16 => i16::from_le_bytes(self.arr(off)) as f64,
            Datatype::Int32 => i32::from_le_bytes(self.arr(off)) as f64,
            Datatype::Float32 => f32::from_le_bytes(self.arr(off)) as f64,
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    if gz {
        let mut enc = GzEncoder::new(f, Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?;
        Ok(())
    } else {
        f.write_all(bytes).map_err(|e| Error::io(path, e))
    }
}

/// Header plus rescaled voxel values (`raw * scl_slope + scl_inter` when the slope is nonzero).
fn read_values(path: &Path) -> Result<(NiftiHeader, Vec<f64>)> {
    let bytes = read_file(path)?;
    let hdr = NiftiHeader::parse(&bytes)?;
    let end = hdr.vox_offset + hdr.data_len();
    if bytes.len() < end {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: end as u64,
            actual: bytes.len() as u64,
        });
    }
    let r = FieldReader {
        bytes: &bytes,
        big_endian: hdr.big_endian,
    };
    let w = hdr.datatype.width();
    let (slope, inter) = (hdr.scl_slope as f64, hdr.scl_inter as f64);
    let rescale = slope != 0.0 && slope.is_finite() && inter.is_finite();
    let values = (0..hdr.dims.len())
        .map(|i| {
            let raw = r.value(hdr.datatype, hdr.vox_offset + i * w);
            if rescale {
                raw * slope + inter
            } else {
                raw
            }
        })
        .collect();
    Ok((hdr, values))
}

/// Loads a CT volume; data must be `int16` or `float32`.
pub fn load_nifti<T: Scalar>(path: impl AsRef<Path>) -> Result<Volume<T>> {
    let (hdr, values) = read_values(path.as_ref())?;
    if !matches!(hdr.datatype, Datatype::Int16 | Datatype::Float32) {
        return Err(Error::Format {
            field: "datatype",
            message: format!("volumes must be int16 or float32, found {:?}", hdr.datatype),
        });
    }
    Volume::from_hu(hdr.dims, hdr.spacing, values.into_iter().map(T::of).collect())
}

/// Saves a volume as `int16` when every value is integral, `float32` otherwise.
pub fn save_volume_nifti<T: Scalar>(vol: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    let integral = vol.data().iter().all(|v| v.fract() == T::zero());
    let dt = if integral { Datatype::Int16 } else { Datatype::Float32 };
    let mut bytes = NiftiHeader::new(vol.dims(), vol.spacing(), dt).to_bytes();
    for v in vol.data() {
        match dt {
            Datatype::Int16 => bytes.extend_from_slice(&(v.as_f64() as i16).to_le_bytes()),
            _ => bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
        }
    }
    write_file(path.as_ref(), &bytes)
}

/// Saves a label mask as `int16` with identity scaling.
pub fn save_mask_nifti(mask: &LabelMask, spacing: [f64; 3], path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = NiftiHeader::new(mask.dims(), spacing, Datatype::Int16).to_bytes();
    for &l in mask.labels() {
        bytes.extend_from_slice(&(l as i16).to_le_bytes());
    }
    write_file(path.as_ref(), &bytes)
}

/// Saves an integer label grid (e.g. supervoxel ids, `-1` outside the region) as `int32`.
pub fn save_labels_nifti(dims: Dims, spacing: [f64; 3], labels: &[i32], path: impl AsRef<Path>) -> Result<()> {
    if labels.len() != dims.len() {
        return Err(Error::Input(format!(
            "label grid of dims {dims} needs {} values, got {}",
            dims.len(),
            labels.len()
        )));
    }
    let mut bytes = NiftiHeader::new(dims, spacing, Datatype::Int32).to_bytes();
    for &l in labels {
        bytes.extend_from_slice(&l.to_le_bytes());
    }
    write_file(path.as_ref(), &bytes)
}

/// Loads an integer label grid of any supported datatype.
pub fn load_labels_nifti(path: impl AsRef<Path>) -> Result<(Dims, [f64; 3], Vec<i32>)> {
    let (hdr, values) = read_values(path.as_ref())?;
    let labels = values
        .into_iter()
        .map(|v| {
            if v.fract() == 0.0 && v >= i32::MIN as f64 && v <= i32::MAX as f64 {
                Ok(v as i32)
            } else {
                Err(Error::Format {
                    field: "data",
                    message: format!("label value {v} is not an integer"),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((hdr.dims, hdr.spacing, labels))
}

/// Loads a label mask; every label must lie in `0..=255`.
pub fn load_mask_nifti(path: impl AsRef<Path>) -> Result<(LabelMask, [f64; 3])> {
    let (dims, spacing, labels) = load_labels_nifti(path)?;
    let labels = labels
        .into_iter()
        .map(|l| {
            u8::try_from(l).map_err(|_| Error::Format {
                field: "data",
                message: format!("mask label {l} outside 0..=255"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((LabelMask::from_labels(dims, labels)?, spacing))
}
