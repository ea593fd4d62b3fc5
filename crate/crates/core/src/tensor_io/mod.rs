//! Volume, mask, dictionary, and image persistence in language-neutral formats.
//!
//! Arrays travel as NPY (see [`npy`]); dictionary metadata rides in a JSON
//! sidecar because NPY has no metadata slot; rendered slices are 8-bit
//! grayscale PNG. Solver-facing data is widened to `f64` on load.

pub mod config;
pub mod npy;

use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, Axis as NdAxis};
use serde::{Deserialize, Serialize};

use crate::csc::Dictionary;
use crate::error::{Error, Result};
pub use config::PipelineConfig;
pub use npy::{read_npy, write_npy, NpyArray};

/// What the scalar values of a [`Volume3D`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueDomain {
    /// Calibrated CT intensities in Hounsfield units.
    Hu,
    /// Clipped and rescaled intensities in [0, 1].
    UnitNormalized,
    /// Sparse-coding reconstruction output (unbounded).
    Reconstruction,
}

/// A 3D scalar field with voxel spacing, axes ordered (slice, row, col).
#[derive(Debug, Clone)]
pub struct Volume3D {
    data: Array3<f64>,
    spacing_mm: [f64; 3],
    origin_label: String,
    value_domain: ValueDomain,
}

impl Volume3D {
    pub fn new(
        data: Array3<f64>,
        spacing_mm: [f64; 3],
        origin_label: impl Into<String>,
        value_domain: ValueDomain,
    ) -> Result<Self> {
        if data.shape().contains(&0) {
            return Err(Error::InvalidData(format!(
                "volume dimensions must all be >= 1, got {:?}",
                data.shape()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidData("volume contains non-finite voxels".into()));
        }
        if spacing_mm.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(Error::InvalidData(format!(
                "voxel spacing must be positive, got {spacing_mm:?}"
            )));
        }
        if value_domain == ValueDomain::UnitNormalized
            && !data.iter().all(|&v| (0.0..=1.0).contains(&v))
        {
            return Err(Error::InvalidData(
                "unit-normalized volume has values outside [0, 1]".into(),
            ));
        }
        Ok(Self {
            data,
            spacing_mm,
            origin_label: origin_label.into(),
            value_domain,
        })
    }

    /// Wrap a raw NPY array as a volume in the stated domain.
    pub fn from_npy(array: &NpyArray, value_domain: ValueDomain) -> Result<Self> {
        let wide = array.to_f64();
        let data = wide
            .into_dimensionality::<ndarray::Ix3>()
            .map_err(|_| Error::ShapeMismatch(format!(
                "expected a 3D volume, got shape {:?}",
                array.shape()
            )))?;
        Self::new(data, [1.0, 1.0, 1.0], "", value_domain)
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn origin_label(&self) -> &str {
        &self.origin_label
    }

    pub fn value_domain(&self) -> ValueDomain {
        self.value_domain
    }

    pub fn axial_slice(&self, index: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(NdAxis(0), index)
    }

    pub fn write_npy(&self, path: &Path) -> Result<()> {
        write_npy(path, &NpyArray::F64(self.data.clone().into_dyn()))
    }
}

/// A binary {0,1} volume paired with a [`Volume3D`] of the same dims.
#[derive(Debug, Clone)]
pub struct MaskVolume {
    data: Array3<u8>,
}

impl MaskVolume {
    pub fn new(data: Array3<u8>) -> Result<Self> {
        if data.shape().contains(&0) {
            return Err(Error::InvalidData(format!(
                "mask dimensions must all be >= 1, got {:?}",
                data.shape()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidData(format!(
                "mask values must be exactly 0 or 1, found {bad}"
            )));
        }
        Ok(Self { data })
    }

    /// Accept any supported dtype whose values are exactly 0 or 1.
    pub fn from_npy(array: &NpyArray) -> Result<Self> {
        let wide = array.to_f64();
        if let Some(bad) = wide.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidData(format!(
                "mask values must be exactly 0 or 1, found {bad}"
            )));
        }
        let data = wide
            .mapv(|v| v as u8)
            .into_dimensionality::<ndarray::Ix3>()
            .map_err(|_| Error::ShapeMismatch(format!(
                "expected a 3D mask, got shape {:?}",
                array.shape()
            )))?;
        Self::new(data)
    }

    pub fn data(&self) -> &Array3<u8> {
        &self.data
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn write_npy(&self, path: &Path) -> Result<()> {
        write_npy(path, &NpyArray::U8(self.data.clone().into_dyn()))
    }
}

/// Viewing axis for slice extraction and MIP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewAxis {
    Axial,
    Coronal,
    Sagittal,
}

impl ViewAxis {
    pub fn nd_axis(self) -> NdAxis {
        match self {
            ViewAxis::Axial => NdAxis(0),
            ViewAxis::Coronal => NdAxis(1),
            ViewAxis::Sagittal => NdAxis(2),
        }
    }
}

impl std::str::FromStr for ViewAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axial" => Ok(ViewAxis::Axial),
            "coronal" => Ok(ViewAxis::Coronal),
            "sagittal" => Ok(ViewAxis::Sagittal),
            other => Err(Error::InvalidArgument(format!(
                "axis must be axial, coronal, or sagittal, got {other:?}"
            ))),
        }
    }
}

/// Extract one plane of a volume as an owned 2D array.
pub fn extract_plane(volume: &Volume3D, axis: ViewAxis, index: usize) -> Result<Array2<f64>> {
    let extent = volume.data().len_of(axis.nd_axis());
    if index >= extent {
        return Err(Error::OutOfRange(format!(
            "slice index {index} out of bounds for axis extent {extent}"
        )));
    }
    Ok(volume.data().index_axis(axis.nd_axis(), index).to_owned())
}

/// Render one slice to an 8-bit grayscale PNG.
///
/// Values map linearly with `lo` at 0 and `hi` at 255, clamped outside the
/// window. Rounding is half-away-from-zero, so the exact window midpoint
/// lands on pixel 128.
pub fn render_slice(
    volume: &Volume3D,
    axis: ViewAxis,
    index: usize,
    window: (f64, f64),
    path: &Path,
) -> Result<()> {
    let (lo, hi) = window;
    if lo >= hi {
        return Err(Error::InvalidArgument(format!(
            "window requires lo < hi, got [{lo}, {hi}]"
        )));
    }
    let plane = extract_plane(volume, axis, index)?;
    let (height, width) = plane.dim();
    let span = hi - lo;
    // Normalize before scaling so the exact midpoint hits 127.5 exactly.
    let pixels: Vec<u8> = plane
        .iter()
        .map(|&v| (((v.clamp(lo, hi) - lo) / span) * 255.0).round() as u8)
        .collect();

    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::InvalidData(format!("png encode failed: {e}")))?;
    writer
        .write_image_data(&pixels)
        .map_err(|e| Error::InvalidData(format!("png encode failed: {e}")))?;
    Ok(())
}

/// JSON sidecar for a persisted dictionary.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DictionaryMeta {
    pub atom_count: usize,
    pub support_h: usize,
    pub support_w: usize,
    pub lambda_used: f64,
    pub seed: u64,
    /// Free-text lineage notes (init, prune, augment steps).
    pub provenance: Vec<String>,
}

const DICT_NPY: &str = "dict.npy";
const DICT_JSON: &str = "dict.json";

/// Persist a dictionary as `dict.npy` (K x h x w float64) plus `dict.json`.
pub fn save_dictionary(dir: &Path, dict: &Dictionary, meta: &DictionaryMeta) -> Result<()> {
    if meta.atom_count != dict.atom_count()
        || (meta.support_h, meta.support_w) != dict.support()
    {
        return Err(Error::InvalidData(
            "dictionary metadata disagrees with atom array".into(),
        ));
    }
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    write_npy(
        &dir.join(DICT_NPY),
        &NpyArray::F64(dict.atoms().clone().into_dyn()),
    )?;
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Config(format!("dictionary meta serialization: {e}")))?;
    std::fs::write(dir.join(DICT_JSON), json).map_err(Error::io(dir.join(DICT_JSON)))?;
    Ok(())
}

/// Load a dictionary directory, re-validating unit norms and support dims.
pub fn load_dictionary(dir: &Path) -> Result<(Dictionary, DictionaryMeta)> {
    let meta_text = std::fs::read_to_string(dir.join(DICT_JSON))
        .map_err(Error::io(dir.join(DICT_JSON)))?;
    let meta: DictionaryMeta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::Config(format!("dictionary meta: {e}")))?;
    let atoms = read_npy(&dir.join(DICT_NPY))?
        .to_f64()
        .into_dimensionality::<ndarray::Ix3>()
        .map_err(|_| Error::ShapeMismatch("dict.npy must be K x h x w".into()))?;
    if atoms.dim().0 != meta.atom_count
        || atoms.dim().1 != meta.support_h
        || atoms.dim().2 != meta.support_w
    {
        return Err(Error::ShapeMismatch(format!(
            "dict.npy shape {:?} disagrees with sidecar ({}, {}, {})",
            atoms.dim(),
            meta.atom_count,
            meta.support_h,
            meta.support_w
        )));
    }
    let dict = Dictionary::new(atoms)?;
    Ok((dict, meta))
}
