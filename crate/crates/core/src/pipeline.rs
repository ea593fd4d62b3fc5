//! End-to-end orchestration: preprocess, learn, encode, project.
//!
//! `learn_from_scans` runs the left half of the pipeline (clip, crop, sample
//! patches, highpass, learn, prune, augment); `encode_volume` runs the right
//! half (clip, crop, per-axial-slice highpass coding and reconstruction).

use ndarray::{s, Array2, Array3, Axis};
use rayon::prelude::*;

use crate::cdl::{augment, cdl_learn, prune, CdlConfig, CdlReport};
use crate::csc::{csc_solve, reconstruct, CoefficientMaps, Dictionary, SolverConfig};
use crate::error::{Error, Result};
use crate::preprocess::{clip_rescale, crop_mask, crop_voi, sample_patches, CropBox, PatchSet};
use crate::spectral::tikhonov_split;
use crate::tensor_io::{DictionaryMeta, MaskVolume, ValueDomain, ViewAxis, Volume3D};

/// Front-half parameters for [`learn_from_scans`].
#[derive(Debug, Clone)]
pub struct LearnParams {
    pub clip_hu: [f64; 2],
    pub patch_count: usize,
    pub patch_size: usize,
    pub min_airway_voxels: usize,
    pub sample_seed: u64,
    pub max_attempts: usize,
    pub tikhonov_lambda: f64,
    pub prune_unused: bool,
    pub augment_atoms: bool,
    pub full_orbit: bool,
}

impl Default for LearnParams {
    fn default() -> Self {
        Self {
            clip_hu: [-1000.0, 600.0],
            patch_count: 50,
            patch_size: 64,
            min_airway_voxels: 1,
            sample_seed: 0,
            max_attempts: 10_000,
            tikhonov_lambda: 5.0,
            prune_unused: true,
            augment_atoms: true,
            full_orbit: false,
        }
    }
}

/// The preprocessing front half shared by `learn_from_scans` and the
/// patch-extraction command: clip/rescale each scan, crop it and its mask to
/// the mask's VoI (scans with an empty mask stay uncropped so the sampling
/// constraint reports the failure), then rejection-sample patches.
pub fn sample_training_patches(
    volumes: &[Volume3D],
    masks: &[MaskVolume],
    params: &LearnParams,
) -> Result<PatchSet> {
    if volumes.is_empty() || volumes.len() != masks.len() {
        return Err(Error::ShapeMismatch(format!(
            "need matching nonempty scan/mask lists, got {} and {}",
            volumes.len(),
            masks.len()
        )));
    }
    let mut voi_volumes = Vec::with_capacity(volumes.len());
    let mut voi_masks = Vec::with_capacity(volumes.len());
    for (vol, mask) in volumes.iter().zip(masks) {
        let clipped = clip_rescale(vol, params.clip_hu[0], params.clip_hu[1])
            .map_err(|e| e.in_stage("clip_rescale"))?;
        if mask.count_nonzero() == 0 {
            voi_volumes.push(clipped);
            voi_masks.push(mask.clone());
        } else {
            let (voi, crop_box) =
                crop_voi(&clipped, mask, 0).map_err(|e| e.in_stage("crop_voi"))?;
            let mask_voi = crop_mask(mask, &crop_box).map_err(|e| e.in_stage("crop_voi"))?;
            voi_volumes.push(voi);
            voi_masks.push(mask_voi);
        }
    }
    sample_patches(
        &voi_volumes,
        &voi_masks,
        params.patch_count,
        params.patch_size,
        params.min_airway_voxels,
        params.sample_seed,
        params.max_attempts,
    )
    .map_err(|e| e.in_stage("sample_patches"))
}

/// Everything `learn_from_scans` produced, for persistence and manifests.
#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub dictionary: Dictionary,
    pub report: CdlReport,
    /// Atom indices (into the learned, pre-augment dictionary) that survived
    /// pruning; identity when pruning is disabled.
    pub kept_atoms: Vec<usize>,
    pub pre_prune_atom_count: usize,
    pub patch_set: PatchSet,
}

/// Learn a dictionary from raw HU scans and their airway masks.
///
/// Per scan: clip/rescale, crop to the mask's VoI (scans whose mask is empty
/// stay uncropped so the sampling constraint reports the failure), then
/// sample airway-containing patches, take their Tikhonov highpass, learn,
/// prune unused atoms, and augment with flips/rotation.
pub fn learn_from_scans(
    volumes: &[Volume3D],
    masks: &[MaskVolume],
    cdl_config: &CdlConfig,
    params: &LearnParams,
) -> Result<LearnOutcome> {
    let patch_set = sample_training_patches(volumes, masks, params)?;

    let highpass: Vec<Array2<f64>> = patch_set
        .patches
        .iter()
        .map(|p| {
            tikhonov_split(p.data.view(), params.tikhonov_lambda).map(|split| split.highpass)
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("tikhonov_split"))?;

    let (learned, maps, report) =
        cdl_learn(&highpass, cdl_config).map_err(|e| e.in_stage("cdl_learn"))?;
    let pre_prune_atom_count = learned.atom_count();

    let (dictionary, kept_atoms) = if params.prune_unused {
        prune(&learned, &maps).map_err(|e| e.in_stage("prune"))?
    } else {
        let kept = (0..learned.atom_count()).collect();
        (learned, kept)
    };
    let dictionary = if params.augment_atoms {
        augment(&dictionary, params.full_orbit).map_err(|e| e.in_stage("augment"))?
    } else {
        dictionary
    };

    Ok(LearnOutcome {
        dictionary,
        report,
        kept_atoms,
        pre_prune_atom_count,
        patch_set,
    })
}

/// Per-slice solver evidence of one encoded volume.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SliceStat {
    pub slice_index: usize,
    pub iterations: usize,
    pub final_primal_residual: f64,
    /// Exact fraction of zero entries in this slice's maps.
    pub sparsity_fraction: f64,
}

/// A sparse-coded enhancement volume in VoI coordinates.
#[derive(Debug, Clone)]
pub struct EncodedVolume {
    pub reconstruction: Volume3D,
    pub add_lowpass: bool,
    pub per_slice_stats: Vec<SliceStat>,
    pub dict_ref: DictionaryMeta,
    pub crop_box: CropBox,
    /// Per-slice coefficient maps, kept only on request.
    pub maps: Option<Vec<CoefficientMaps>>,
}

/// Right-half parameters for [`encode_volume`].
#[derive(Debug, Clone)]
pub struct EncodeParams {
    pub clip_hu: [f64; 2],
    pub tikhonov_lambda: f64,
    pub add_lowpass: bool,
    pub keep_maps: bool,
    pub solver: SolverConfig,
    /// Worker count for slice encoding; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for EncodeParams {
    fn default() -> Self {
        Self {
            clip_hu: [-1000.0, 600.0],
            tikhonov_lambda: 5.0,
            add_lowpass: false,
            keep_maps: false,
            solver: SolverConfig::default(),
            threads: None,
        }
    }
}

/// Sparse-code a whole volume slice by slice.
///
/// Slices are independent problems; the output is deterministic for any
/// worker count because results are reassembled by slice index.
pub fn encode_volume(
    volume: &Volume3D,
    lung_mask: &MaskVolume,
    dict: &Dictionary,
    dict_ref: &DictionaryMeta,
    params: &EncodeParams,
) -> Result<EncodedVolume> {
    let clipped = clip_rescale(volume, params.clip_hu[0], params.clip_hu[1])
        .map_err(|e| e.in_stage("clip_rescale"))?;
    let (voi, crop_box) = crop_voi(&clipped, lung_mask, 0).map_err(|e| e.in_stage("crop_voi"))?;
    let (depth, height, width) = voi.dims();

    let encode_slice = |slice_index: usize| -> Result<(Array2<f64>, SliceStat, CoefficientMaps)> {
        let plane = voi.axial_slice(slice_index).to_owned();
        let split = tikhonov_split(plane.view(), params.tikhonov_lambda)?;
        let k = dict.atom_count();
        let (maps, stat) = if split.highpass.iter().all(|&v| v == 0.0) {
            // Identical semantics to solving: zero highpass codes to zero maps.
            (
                CoefficientMaps::new(Array3::zeros((k, height, width)), params.solver.lambda),
                SliceStat {
                    slice_index,
                    iterations: 0,
                    final_primal_residual: 0.0,
                    sparsity_fraction: 1.0,
                },
            )
        } else {
            let (maps, report) = csc_solve(dict, split.highpass.view(), &params.solver, None)
                .map_err(|e| Error::SliceFailure {
                    index: slice_index,
                    source: Box::new(e),
                })?;
            let stat = SliceStat {
                slice_index,
                iterations: report.iterations_run,
                final_primal_residual: report.primal_residuals.last().copied().unwrap_or(0.0),
                sparsity_fraction: maps.zero_fraction(),
            };
            (maps, stat)
        };
        let mut out = reconstruct(dict, &maps)?;
        if params.add_lowpass {
            out += &split.lowpass;
        }
        Ok((out, stat, maps))
    };

    let run = || -> Result<Vec<(Array2<f64>, SliceStat, CoefficientMaps)>> {
        (0..depth).into_par_iter().map(encode_slice).collect()
    };
    let slices = match params.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(run)?
        }
        None => run()?,
    };

    let mut data = Array3::zeros((depth, height, width));
    let mut per_slice_stats = Vec::with_capacity(depth);
    let mut kept_maps = params.keep_maps.then(Vec::new);
    for (i, (plane, stat, maps)) in slices.into_iter().enumerate() {
        data.index_axis_mut(Axis(0), i).assign(&plane);
        per_slice_stats.push(stat);
        if let Some(store) = kept_maps.as_mut() {
            store.push(maps);
        }
    }
    let reconstruction = Volume3D::new(
        data,
        voi.spacing_mm(),
        voi.origin_label(),
        ValueDomain::Reconstruction,
    )?;
    Ok(EncodedVolume {
        reconstruction,
        add_lowpass: params.add_lowpass,
        per_slice_stats,
        dict_ref: dict_ref.clone(),
        crop_box,
        maps: kept_maps,
    })
}

/// Maximum intensity projection along one axis, optionally restricted to a
/// half-open slab `[start, end)`.
pub fn mip_project(
    volume: &Volume3D,
    axis: ViewAxis,
    slab: Option<(usize, usize)>,
) -> Result<Array2<f64>> {
    let extent = volume.data().len_of(axis.nd_axis());
    let (start, end) = slab.unwrap_or((0, extent));
    if start >= end || end > extent {
        return Err(Error::OutOfRange(format!(
            "slab [{start}, {end}) invalid for axis extent {extent}"
        )));
    }
    let mut projection: Option<Array2<f64>> = None;
    for idx in start..end {
        let plane = volume.data().index_axis(axis.nd_axis(), idx);
        match projection.as_mut() {
            None => projection = Some(plane.to_owned()),
            Some(acc) => acc.zip_mut_with(&plane, |a, &b| *a = a.max(b)),
        }
    }
    Ok(projection.expect("slab is nonempty"))
}

/// Place an encoded VoI back into original scan coordinates, zero outside.
pub fn reembed(
    encoded: &EncodedVolume,
    crop_box: &CropBox,
    original_dims: (usize, usize, usize),
) -> Result<Volume3D> {
    if !crop_box.fits_within(original_dims) {
        return Err(Error::OutOfRange(format!(
            "crop box {crop_box:?} exceeds original dims {original_dims:?}"
        )));
    }
    if crop_box.dims() != encoded.reconstruction.dims() {
        return Err(Error::ShapeMismatch(format!(
            "crop box dims {:?} != reconstruction dims {:?}",
            crop_box.dims(),
            encoded.reconstruction.dims()
        )));
    }
    let mut data = Array3::zeros(original_dims);
    data.slice_mut(s![
        crop_box.slice.0..crop_box.slice.1,
        crop_box.row.0..crop_box.row.1,
        crop_box.col.0..crop_box.col.1
    ])
    .assign(encoded.reconstruction.data());
    Volume3D::new(
        data,
        encoded.reconstruction.spacing_mm(),
        encoded.reconstruction.origin_label(),
        ValueDomain::Reconstruction,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csc::soft_threshold;
    use crate::rng::SplitMix64;
    use ndarray::Array3;

    fn delta_dict() -> (Dictionary, DictionaryMeta) {
        let mut atoms = Array3::zeros((1, 5, 5));
        atoms[[0, 0, 0]] = 1.0;
        let meta = DictionaryMeta {
            atom_count: 1,
            support_h: 5,
            support_w: 5,
            lambda_used: 0.2,
            seed: 0,
            provenance: vec!["delta".into()],
        };
        (Dictionary::new(atoms).unwrap(), meta)
    }

    fn hu_volume(data: Array3<f64>) -> Volume3D {
        Volume3D::new(data, [1.0; 3], "t", ValueDomain::Hu).unwrap()
    }

    #[test]
    fn mip_single_slice_is_identity() {
        let vol = hu_volume(Array3::from_shape_fn((1, 3, 4), |(_, j, k)| (j * 4 + k) as f64));
        let proj = mip_project(&vol, ViewAxis::Axial, None).unwrap();
        assert_eq!(proj, vol.data().index_axis(Axis(0), 0).to_owned());
    }

    #[test]
    fn mip_point_source() {
        let mut data = Array3::zeros((4, 4, 4));
        data[[2, 1, 3]] = 7.0;
        let vol = hu_volume(data);
        let proj = mip_project(&vol, ViewAxis::Axial, None).unwrap();
        let sevens = proj.iter().filter(|&&v| v == 7.0).count();
        assert_eq!(sevens, 1);
        assert_eq!(proj[[1, 3]], 7.0);
    }

    #[test]
    fn mip_commutes_with_monotone_map() {
        let mut rng = SplitMix64::new(15);
        let data = Array3::from_shape_simple_fn((3, 5, 5), || rng.next_f64());
        let vol = hu_volume(data.clone());
        let mapped = hu_volume(data.mapv(|v| 2.0 * v + 1.0));
        let a = mip_project(&mapped, ViewAxis::Coronal, None).unwrap();
        let b = mip_project(&vol, ViewAxis::Coronal, None)
            .unwrap()
            .mapv(|v| 2.0 * v + 1.0);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mip_invalid_slab_errors() {
        let vol = hu_volume(Array3::zeros((4, 2, 2)));
        assert!(matches!(
            mip_project(&vol, ViewAxis::Axial, Some((3, 3))),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            mip_project(&vol, ViewAxis::Axial, Some((0, 5))),
            Err(Error::OutOfRange(_))
        ));
    }

    fn encode_constant(add_lowpass: bool) -> EncodedVolume {
        let (dict, meta) = delta_dict();
        let vol = hu_volume(Array3::from_elem((2, 16, 16), -200.0));
        let mask = MaskVolume::new(Array3::ones((2, 16, 16))).unwrap();
        let params = EncodeParams {
            add_lowpass,
            ..EncodeParams::default()
        };
        encode_volume(&vol, &mask, &dict, &meta, &params).unwrap()
    }

    #[test]
    fn encode_constant_volume_is_zero() {
        let enc = encode_constant(false);
        assert_eq!(enc.reconstruction.dims(), (2, 16, 16));
        for &v in enc.reconstruction.data().iter() {
            assert!(v.abs() < 1e-12, "residual {v}");
        }
        assert_eq!(enc.per_slice_stats.len(), 2);
        for stat in &enc.per_slice_stats {
            assert!((stat.sparsity_fraction - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_constant_with_lowpass_passes_through() {
        let enc = encode_constant(true);
        // -200 HU inside [-1000, 600] rescales to 0.5.
        for &v in enc.reconstruction.data().iter() {
            assert!((v - 0.5).abs() < 1e-10, "value {v}");
        }
    }

    #[test]
    fn encode_delta_dict_matches_elementwise_lasso() {
        let (dict, meta) = delta_dict();
        let mut rng = SplitMix64::new(5);
        let data = Array3::from_shape_simple_fn((1, 16, 16), || rng.next_f64() * 1600.0 - 1000.0);
        let vol = hu_volume(data);
        let mask = MaskVolume::new(Array3::ones((1, 16, 16))).unwrap();
        let params = EncodeParams {
            keep_maps: true,
            solver: SolverConfig {
                eps_abs: 1e-9,
                eps_rel: 1e-9,
                max_iter: 3000,
                ..SolverConfig::for_lambda(0.05)
            },
            ..EncodeParams::default()
        };
        let enc = encode_volume(&vol, &mask, &dict, &meta, &params).unwrap();

        let clipped = clip_rescale(&vol, -1000.0, 600.0).unwrap();
        let split = tikhonov_split(clipped.axial_slice(0), 5.0).unwrap();
        let expected = soft_threshold(&split.highpass, 0.05).unwrap();
        let maps = enc.maps.as_ref().unwrap()[0].maps();
        for (got, want) in maps.iter().zip(expected.iter()) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn encode_is_thread_count_invariant() {
        let (dict, meta) = delta_dict();
        let mut rng = SplitMix64::new(9);
        let data = Array3::from_shape_simple_fn((4, 16, 16), || rng.next_f64() * 1600.0 - 1000.0);
        let vol = hu_volume(data);
        let mask = MaskVolume::new(Array3::ones((4, 16, 16))).unwrap();
        let mut params = EncodeParams {
            keep_maps: true,
            ..EncodeParams::default()
        };
        params.threads = Some(1);
        let a = encode_volume(&vol, &mask, &dict, &meta, &params).unwrap();
        params.threads = Some(4);
        let b = encode_volume(&vol, &mask, &dict, &meta, &params).unwrap();
        assert_eq!(a.reconstruction.data(), b.reconstruction.data());

        // Slice stats line up with the maps they describe, exactly.
        assert_eq!(a.per_slice_stats.len(), 4);
        let maps = a.maps.as_ref().unwrap();
        for (stat, m) in a.per_slice_stats.iter().zip(maps) {
            assert!((0.0..=1.0).contains(&stat.sparsity_fraction));
            assert_eq!(stat.sparsity_fraction, m.zero_fraction());
        }
    }

    #[test]
    fn reembed_full_crop_is_identity() {
        let enc = encode_constant(true);
        let cb = enc.crop_box;
        let out = reembed(&enc, &cb, (2, 16, 16)).unwrap();
        assert_eq!(out.data(), enc.reconstruction.data());
    }

    #[test]
    fn reembed_restores_box_losslessly() {
        let (dict, meta) = delta_dict();
        let mut data = Array3::from_elem((6, 24, 24), -1000.0);
        data.slice_mut(s![2..4, 4..20, 6..22]).fill(100.0);
        let vol = hu_volume(data);
        let mut m = Array3::zeros((6, 24, 24));
        m.slice_mut(s![2..4, 4..20, 6..22]).fill(1);
        let mask = MaskVolume::new(m).unwrap();
        let enc =
            encode_volume(&vol, &mask, &dict, &meta, &EncodeParams::default()).unwrap();
        assert_eq!(enc.crop_box.slice, (2, 4));
        let full = reembed(&enc, &enc.crop_box, (6, 24, 24)).unwrap();
        for (idx, &v) in full.data().indexed_iter() {
            let inside = (2..4).contains(&idx.0) && (4..20).contains(&idx.1) && (6..22).contains(&idx.2);
            if inside {
                let local = (idx.0 - 2, idx.1 - 4, idx.2 - 6);
                assert_eq!(v, enc.reconstruction.data()[[local.0, local.1, local.2]]);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn learn_from_scans_empty_mask_surfaces_sampling_stage() {
        let vols = vec![hu_volume(Array3::zeros((2, 32, 32)))];
        let masks = vec![MaskVolume::new(Array3::zeros((2, 32, 32))).unwrap()];
        let mut config = CdlConfig::for_lambda(0.2);
        config.atom_count = 2;
        config.atom_size = 3;
        config.outer_iters = 1;
        let params = LearnParams {
            patch_count: 2,
            patch_size: 16,
            max_attempts: 25,
            ..LearnParams::default()
        };
        match learn_from_scans(&vols, &masks, &config, &params) {
            Err(Error::Stage { stage, source }) => {
                assert_eq!(stage, "sample_patches");
                assert!(matches!(*source, Error::SamplingExhausted { .. }));
            }
            other => panic!("expected staged sampling error, got {other:?}"),
        }
    }
}
