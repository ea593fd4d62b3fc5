//! Intensity normalization, VoI cropping, and airway-constrained patch
//! sampling.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor_io::{MaskVolume, ValueDomain, Volume3D};

/// Half-open crop window per axis, in (slice, row, col) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub slice: (usize, usize),
    pub row: (usize, usize),
    pub col: (usize, usize),
}

impl CropBox {
    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.slice.1 - self.slice.0,
            self.row.1 - self.row.0,
            self.col.1 - self.col.0,
        )
    }

    pub fn fits_within(&self, dims: (usize, usize, usize)) -> bool {
        self.slice.0 < self.slice.1
            && self.row.0 < self.row.1
            && self.col.0 < self.col.1
            && self.slice.1 <= dims.0
            && self.row.1 <= dims.1
            && self.col.1 <= dims.2
    }
}

/// Clip to `[lo, hi]` and rescale affinely onto [0, 1].
///
/// Accepts HU input (the normal case) or already-normalized input, so that
/// renormalizing with `lo = 0, hi = 1` is the identity; dims and spacing are
/// untouched.
pub fn clip_rescale(volume: &Volume3D, lo: f64, hi: f64) -> Result<Volume3D> {
    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "clip window requires finite lo < hi, got [{lo}, {hi}]"
        )));
    }
    if volume.value_domain() == ValueDomain::Reconstruction {
        return Err(Error::InvalidArgument(
            "clip_rescale expects HU or unit-normalized input, not a reconstruction".into(),
        ));
    }
    let span = hi - lo;
    let data = volume.data().mapv(|v| (v.clamp(lo, hi) - lo) / span);
    Volume3D::new(
        data,
        volume.spacing_mm(),
        volume.origin_label(),
        ValueDomain::UnitNormalized,
    )
}

/// Tight bounding box of the nonzero mask voxels, dilated by `margin_voxels`
/// and clamped to the volume bounds; returns the cropped volume with spacing
/// preserved (no resampling anywhere in this pipeline).
pub fn crop_voi(
    volume: &Volume3D,
    mask: &MaskVolume,
    margin_voxels: usize,
) -> Result<(Volume3D, CropBox)> {
    if mask.dims() != volume.dims() {
        return Err(Error::ShapeMismatch(format!(
            "mask dims {:?} != volume dims {:?}",
            mask.dims(),
            volume.dims()
        )));
    }
    let (d, h, w) = volume.dims();
    let mut lo = [d, h, w];
    let mut hi = [0usize; 3];
    for ((i, j, k), &v) in mask.data().indexed_iter() {
        if v != 0 {
            lo[0] = lo[0].min(i);
            lo[1] = lo[1].min(j);
            lo[2] = lo[2].min(k);
            hi[0] = hi[0].max(i);
            hi[1] = hi[1].max(j);
            hi[2] = hi[2].max(k);
        }
    }
    if lo[0] == d && hi[0] == 0 && mask.count_nonzero() == 0 {
        return Err(Error::EmptyMask);
    }
    let bounds = [d, h, w];
    let mut start = [0usize; 3];
    let mut end = [0usize; 3];
    for axis in 0..3 {
        start[axis] = lo[axis].saturating_sub(margin_voxels);
        end[axis] = (hi[axis] + margin_voxels + 1).min(bounds[axis]);
    }
    let crop_box = CropBox {
        slice: (start[0], end[0]),
        row: (start[1], end[1]),
        col: (start[2], end[2]),
    };
    let data = volume
        .data()
        .slice(s![start[0]..end[0], start[1]..end[1], start[2]..end[2]])
        .to_owned();
    let cropped = Volume3D::new(
        data,
        volume.spacing_mm(),
        volume.origin_label(),
        volume.value_domain(),
    )?;
    Ok((cropped, crop_box))
}

/// Apply an existing crop box to a mask (keeps volume/mask pairs aligned).
pub fn crop_mask(mask: &MaskVolume, crop_box: &CropBox) -> Result<MaskVolume> {
    if !crop_box.fits_within(mask.dims()) {
        return Err(Error::OutOfRange(format!(
            "crop box {crop_box:?} exceeds mask dims {:?}",
            mask.dims()
        )));
    }
    MaskVolume::new(
        mask.data()
            .slice(s![
                crop_box.slice.0..crop_box.slice.1,
                crop_box.row.0..crop_box.row.1,
                crop_box.col.0..crop_box.col.1
            ])
            .to_owned(),
    )
}

/// Where a training patch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchProvenance {
    pub scan_id: usize,
    pub slice_index: usize,
    pub row_offset: usize,
    pub col_offset: usize,
}

/// One unit-normalized training patch.
#[derive(Debug, Clone)]
pub struct Patch2D {
    pub data: Array2<f64>,
    pub provenance: PatchProvenance,
}

/// Ordered sampled patches plus the seed that produced them.
#[derive(Debug, Clone)]
pub struct PatchSet {
    pub patches: Vec<Patch2D>,
    pub sampler_seed: u64,
    pub source_scan_count: usize,
}

/// Rejection-sample axial patches whose airway-mask window contains at least
/// `min_airway_voxels` nonzero voxels.
///
/// Draw order per attempt: scan, axial slice, row offset, col offset — all
/// from one SplitMix64 stream with unbiased bounded draws, so a seed
/// reproduces the same patch set on any platform. Offsets keep the window
/// fully inside the slice. `max_attempts` bounds *consecutive* rejections.
pub fn sample_patches(
    volumes: &[Volume3D],
    airway_masks: &[MaskVolume],
    count: usize,
    patch_size: usize,
    min_airway_voxels: usize,
    seed: u64,
    max_attempts: usize,
) -> Result<PatchSet> {
    if volumes.is_empty() || volumes.len() != airway_masks.len() {
        return Err(Error::ShapeMismatch(format!(
            "need matching nonempty volume/mask lists, got {} and {}",
            volumes.len(),
            airway_masks.len()
        )));
    }
    if count == 0 || patch_size == 0 {
        return Err(Error::InvalidArgument(
            "count and patch_size must be positive".into(),
        ));
    }
    if min_airway_voxels < 1 {
        return Err(Error::InvalidArgument(
            "min_airway_voxels must be >= 1".into(),
        ));
    }
    for (i, (v, m)) in volumes.iter().zip(airway_masks).enumerate() {
        if v.dims() != m.dims() {
            return Err(Error::ShapeMismatch(format!(
                "scan {i}: volume dims {:?} != mask dims {:?}",
                v.dims(),
                m.dims()
            )));
        }
        if v.value_domain() != ValueDomain::UnitNormalized {
            return Err(Error::InvalidArgument(format!(
                "scan {i} must be unit-normalized before sampling"
            )));
        }
        let (_, h, w) = v.dims();
        if patch_size > h || patch_size > w {
            return Err(Error::InvalidArgument(format!(
                "patch size {patch_size} exceeds scan {i} plane dims ({h}, {w})"
            )));
        }
    }

    let mut rng = SplitMix64::new(seed);
    let mut patches = Vec::with_capacity(count);
    let mut consecutive_rejections = 0usize;
    while patches.len() < count {
        let scan_id = rng.next_below(volumes.len() as u64) as usize;
        let (depth, height, width) = volumes[scan_id].dims();
        let slice_index = rng.next_below(depth as u64) as usize;
        let row_offset = rng.next_below((height - patch_size + 1) as u64) as usize;
        let col_offset = rng.next_below((width - patch_size + 1) as u64) as usize;

        let window = airway_masks[scan_id].data().slice(s![
            slice_index,
            row_offset..row_offset + patch_size,
            col_offset..col_offset + patch_size
        ]);
        let airway_voxels = window.iter().filter(|&&v| v != 0).count();
        if airway_voxels < min_airway_voxels {
            consecutive_rejections += 1;
            if consecutive_rejections >= max_attempts {
                return Err(Error::SamplingExhausted {
                    attempts: consecutive_rejections,
                    constraint: format!(
                        "window of {patch_size}x{patch_size} with >= {min_airway_voxels} airway voxels"
                    ),
                });
            }
            continue;
        }
        consecutive_rejections = 0;
        let data = volumes[scan_id]
            .data()
            .slice(s![
                slice_index,
                row_offset..row_offset + patch_size,
                col_offset..col_offset + patch_size
            ])
            .to_owned();
        patches.push(Patch2D {
            data,
            provenance: PatchProvenance {
                scan_id,
                slice_index,
                row_offset,
                col_offset,
            },
        });
    }
    Ok(PatchSet {
        patches,
        sampler_seed: seed,
        source_scan_count: volumes.len(),
    })
}
