//! Deterministic command-line surface over the sparse-coding pipeline.
//!
//! Subcommands mirror the pipeline stages so each is independently runnable
//! and scriptable. Machine-readable JSON goes to stdout, diagnostics to
//! stderr, and every file-producing run writes a `manifest.json` beside its
//! outputs with input fingerprints, the effective configuration, and the
//! seed. Exit codes: 0 success, 1 usage, 2 data/validation, 3 numerical.

mod manifest;

use std::path::{Path, PathBuf};

use aircsc::cdl::{CdlConfig, DictSolverConfig};
use aircsc::csc::{CoefficientMaps, SolverConfig};
use aircsc::error::{Error, Result};
use aircsc::metrics::{dice, sparsity_stats, SparsityStats};
use aircsc::pipeline::{
    encode_volume, learn_from_scans, mip_project, sample_training_patches, EncodeParams,
    LearnParams,
};
use aircsc::tensor_io::{
    load_dictionary, read_npy, render_slice, save_dictionary, write_npy, DictionaryMeta,
    MaskVolume, NpyArray, PipelineConfig, ValueDomain, ViewAxis, Volume3D,
};
use clap::{Parser, Subcommand, ValueEnum};
use manifest::Manifest;
use ndarray::Array3;

#[derive(Parser)]
#[command(name = "aircsc", version, about = "Convolutional sparse coding for lung CT enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Axial,
    Coronal,
    Sagittal,
}

impl From<AxisArg> for ViewAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Axial => ViewAxis::Axial,
            AxisArg::Coronal => ViewAxis::Coronal,
            AxisArg::Sagittal => ViewAxis::Sagittal,
        }
    }
}

fn parse_f64_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected LO,HI, got {s:?}"));
    }
    let lo = parts[0].trim().parse().map_err(|e| format!("bad LO: {e}"))?;
    let hi = parts[1].trim().parse().map_err(|e| format!("bad HI: {e}"))?;
    Ok((lo, hi))
}

fn parse_usize_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected A,B, got {s:?}"));
    }
    let a = parts[0].trim().parse().map_err(|e| format!("bad A: {e}"))?;
    let b = parts[1].trim().parse().map_err(|e| format!("bad B: {e}"))?;
    Ok((a, b))
}

#[derive(Subcommand)]
enum Command {
    /// Clip/rescale a volume and crop it to the mask's volume of interest.
    Preprocess {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long, value_parser = parse_f64_pair, allow_hyphen_values = true)]
        clip: (f64, f64),
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        margin: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample airway-containing training patches from preprocessed scans.
    ExtractPatches {
        #[arg(long, value_delimiter = ',', required = true)]
        scans: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        masks: Vec<PathBuf>,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        patch_size: usize,
        #[arg(long)]
        min_airway: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn, prune, and augment a convolutional dictionary.
    LearnDict {
        #[arg(long, value_delimiter = ',', required = true)]
        scans: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        masks: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        atoms: Option<usize>,
        #[arg(long)]
        atom_size: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        outer_iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_prune: bool,
        #[arg(long)]
        no_augment: bool,
        #[arg(long)]
        full_orbit: bool,
    },
    /// Sparse-code a volume slice-wise with a learned dictionary.
    Encode {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        tikhonov_lambda: Option<f64>,
        #[arg(long)]
        add_lowpass: bool,
        #[arg(long)]
        save_maps: bool,
        #[arg(long, env = "AIRCSC_THREADS")]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one slice to an 8-bit grayscale PNG.
    Render {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long)]
        index: usize,
        #[arg(long, value_parser = parse_f64_pair, allow_hyphen_values = true)]
        window: (f64, f64),
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum intensity projection along an axis.
    Mip {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, value_parser = parse_usize_pair)]
        slab: Option<(usize, usize)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dice overlap between a prediction and a ground-truth mask.
    Dice {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        smooth: bool,
    },
    /// Sparsity statistics of saved coefficient maps.
    Stats {
        #[arg(long)]
        maps: PathBuf,
    },
}

fn load_hu_volume(path: &Path) -> Result<Volume3D> {
    Volume3D::from_npy(&read_npy(path)?, ValueDomain::Hu)
}

fn load_raw_volume(path: &Path) -> Result<Volume3D> {
    Volume3D::from_npy(&read_npy(path)?, ValueDomain::Reconstruction)
}

fn load_mask(path: &Path) -> Result<MaskVolume> {
    MaskVolume::from_npy(&read_npy(path)?)
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Resolve the effective configuration: defaults, then file, then flags.
struct ConfigOverrides {
    lambda: Option<f64>,
    atoms: Option<usize>,
    atom_size: Option<usize>,
    outer_iters: Option<usize>,
    seed: Option<u64>,
    tikhonov_lambda: Option<f64>,
    add_lowpass: bool,
}

impl ConfigOverrides {
    fn none() -> Self {
        Self {
            lambda: None,
            atoms: None,
            atom_size: None,
            outer_iters: None,
            seed: None,
            tikhonov_lambda: None,
            add_lowpass: false,
        }
    }
}

fn resolve_config(path: Option<&Path>, over: &ConfigOverrides) -> Result<PipelineConfig> {
    let mut config = match path {
        Some(p) => aircsc::tensor_io::config::read_config(p)?,
        None => PipelineConfig::default(),
    };
    // A lambda override re-derives the coupled rho0 default, but never
    // tramples a penalty the config file pinned explicitly.
    let rho0_explicit = match path {
        Some(p) => std::fs::read_to_string(p)
            .ok()
            .and_then(|text| serde_json::from_str::<serde_json::Value>(&text).ok())
            .is_some_and(|doc| doc.get("rho0").is_some()),
        None => false,
    };
    if let Some(lambda) = over.lambda {
        config.lambda = lambda;
        if !rho0_explicit {
            config.rho0 = 10.0 * lambda + 0.1;
        }
    }
    if let Some(v) = over.atoms {
        config.atoms = v;
    }
    if let Some(v) = over.atom_size {
        config.atom_size = v;
    }
    if let Some(v) = over.outer_iters {
        config.outer_iters = v;
    }
    if let Some(v) = over.seed {
        config.seed = v;
    }
    if let Some(v) = over.tikhonov_lambda {
        config.tikhonov_lambda = v;
    }
    if over.add_lowpass {
        config.add_lowpass = true;
    }
    config.validate()?;
    Ok(config)
}

fn solver_from_config(config: &PipelineConfig) -> SolverConfig {
    SolverConfig {
        lambda: config.lambda,
        rho0: config.rho0,
        adapt_rho: config.adapt_rho,
        mu: config.mu,
        tau: config.tau,
        max_iter: config.max_iter,
        eps_abs: config.eps_abs,
        eps_rel: config.eps_rel,
    }
}

fn learn_params_from_config(config: &PipelineConfig) -> LearnParams {
    LearnParams {
        clip_hu: config.clip_hu,
        patch_count: config.patches,
        patch_size: config.patch_size,
        min_airway_voxels: config.min_airway_voxels,
        sample_seed: config.seed,
        max_attempts: 10_000,
        tikhonov_lambda: config.tikhonov_lambda,
        prune_unused: true,
        augment_atoms: true,
        full_orbit: false,
    }
}

fn cdl_from_config(config: &PipelineConfig) -> CdlConfig {
    CdlConfig {
        atom_count: config.atoms,
        atom_size: config.atom_size,
        lambda: config.lambda,
        sigma0: config.sigma0,
        outer_iters: config.outer_iters,
        coding: solver_from_config(config),
        dict_inner: DictSolverConfig {
            mu: config.mu,
            tau: config.tau,
            ..DictSolverConfig::default()
        },
        seed: config.seed,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess {
            volume,
            clip,
            mask,
            margin,
            out,
        } => {
            let mut man = Manifest::new("preprocess");
            man.record_input(&volume)?;
            man.record_input(&mask)?;
            let vol = load_hu_volume(&volume)?;
            let mask_vol = load_mask(&mask)?;
            let clipped = aircsc::preprocess::clip_rescale(&vol, clip.0, clip.1)?;
            let (voi, crop_box) = aircsc::preprocess::crop_voi(&clipped, &mask_vol, margin)?;
            let mask_voi = aircsc::preprocess::crop_mask(&mask_vol, &crop_box)?;
            ensure_out_dir(&out)?;
            let vol_path = out.join("voi.npy");
            let mask_path = out.join("voi_mask.npy");
            voi.write_npy(&vol_path)?;
            mask_voi.write_npy(&mask_path)?;
            man.record_config(&serde_json::json!({"clip": clip, "margin": margin}).to_string());
            man.record_output(&vol_path);
            man.record_output(&mask_path);
            man.write(&out.join("manifest.json"))?;
            println!(
                "{}",
                serde_json::json!({
                    "crop_box": crop_box,
                    "voi_dims": voi.dims(),
                    "out": out,
                })
            );
            Ok(())
        }
        Command::ExtractPatches {
            scans,
            masks,
            count,
            patch_size,
            min_airway,
            seed,
            out,
        } => {
            if scans.len() != masks.len() {
                return Err(Error::InvalidArgument(format!(
                    "got {} scans but {} masks",
                    scans.len(),
                    masks.len()
                )));
            }
            let mut man = Manifest::new("extract-patches");
            let mut vols = Vec::new();
            let mut mask_vols = Vec::new();
            for (s, m) in scans.iter().zip(&masks) {
                man.record_input(s)?;
                man.record_input(m)?;
                vols.push(load_hu_volume(s)?);
                mask_vols.push(load_mask(m)?);
            }
            let params = LearnParams {
                patch_count: count,
                patch_size,
                min_airway_voxels: min_airway,
                sample_seed: seed,
                ..LearnParams::default()
            };
            let set = sample_training_patches(&vols, &mask_vols, &params)?;
            ensure_out_dir(&out)?;
            let mut stack = Array3::zeros((set.patches.len(), patch_size, patch_size));
            for (i, p) in set.patches.iter().enumerate() {
                stack.index_axis_mut(ndarray::Axis(0), i).assign(&p.data);
            }
            let patches_path = out.join("patches.npy");
            write_npy(&patches_path, &NpyArray::F64(stack.into_dyn()))?;
            let provenance: Vec<_> = set.patches.iter().map(|p| p.provenance).collect();
            let prov_path = out.join("provenance.json");
            std::fs::write(
                &prov_path,
                serde_json::to_string_pretty(&serde_json::json!({
                    "seed": seed,
                    "scans": scans,
                    "patches": provenance,
                }))
                .expect("serializable"),
            )
            .map_err(Error::io(&prov_path))?;
            man.seed = Some(seed);
            man.record_output(&patches_path);
            man.record_output(&prov_path);
            man.write(&out.join("manifest.json"))?;
            println!(
                "{}",
                serde_json::json!({"patches": set.patches.len(), "out": out})
            );
            Ok(())
        }
        Command::LearnDict {
            scans,
            masks,
            config,
            atoms,
            atom_size,
            lambda,
            outer_iters,
            seed,
            out,
            no_prune,
            no_augment,
            full_orbit,
        } => {
            let overrides = ConfigOverrides {
                lambda,
                atoms,
                atom_size,
                outer_iters,
                seed,
                ..ConfigOverrides::none()
            };
            let effective = resolve_config(config.as_deref(), &overrides)?;
            let mut man = Manifest::new("learn-dict");
            for p in scans.iter().chain(&masks) {
                man.record_input(p)?;
            }
            man.record_config(&effective.to_json_string());
            man.seed = Some(effective.seed);
            if scans.len() != masks.len() {
                return Err(Error::InvalidArgument(format!(
                    "got {} scans but {} masks",
                    scans.len(),
                    masks.len()
                )));
            }
            let vols: Vec<Volume3D> = scans
                .iter()
                .map(|p| load_hu_volume(p))
                .collect::<Result<_>>()?;
            let mask_vols: Vec<MaskVolume> = masks
                .iter()
                .map(|p| load_mask(p))
                .collect::<Result<_>>()?;

            let mut params = learn_params_from_config(&effective);
            params.prune_unused = !no_prune;
            params.augment_atoms = !no_augment;
            params.full_orbit = full_orbit;
            let cdl_config = cdl_from_config(&effective);
            let outcome = learn_from_scans(&vols, &mask_vols, &cdl_config, &params)?;

            let (support_h, support_w) = outcome.dictionary.support();
            let mut provenance = vec![format!(
                "init: {} atoms of {}x{}, zero-mean, seed {}",
                effective.atoms, effective.atom_size, effective.atom_size, effective.seed
            )];
            provenance.push(format!(
                "learned: {} outer iterations, lambda {}",
                effective.outer_iters, effective.lambda
            ));
            if params.prune_unused {
                provenance.push(format!(
                    "pruned: kept {} of {} atoms {:?}",
                    outcome.kept_atoms.len(),
                    outcome.pre_prune_atom_count,
                    outcome.kept_atoms
                ));
            } else {
                provenance.push("pruning: skipped".into());
            }
            if params.augment_atoms {
                provenance.push(format!(
                    "augmented: flips/rotation{} -> {} atoms",
                    if full_orbit { " (full orbit)" } else { "" },
                    outcome.dictionary.atom_count()
                ));
            } else {
                provenance.push("augmentation: skipped".into());
            }
            let meta = DictionaryMeta {
                atom_count: outcome.dictionary.atom_count(),
                support_h,
                support_w,
                lambda_used: effective.lambda,
                seed: effective.seed,
                provenance,
            };
            ensure_out_dir(&out)?;
            save_dictionary(&out, &outcome.dictionary, &meta)?;
            let report_path = out.join("report.json");
            std::fs::write(
                &report_path,
                serde_json::to_string_pretty(&outcome.report).expect("serializable"),
            )
            .map_err(Error::io(&report_path))?;
            man.record_output(&out.join("dict.npy"));
            man.record_output(&out.join("dict.json"));
            man.record_output(&report_path);
            man.write(&out.join("manifest.json"))?;
            println!(
                "{}",
                serde_json::json!({
                    "atoms": meta.atom_count,
                    "support": [support_h, support_w],
                    "out": out,
                })
            );
            Ok(())
        }
        Command::Encode {
            volume,
            mask,
            dict,
            config,
            lambda,
            tikhonov_lambda,
            add_lowpass,
            save_maps,
            threads,
            out,
        } => {
            let overrides = ConfigOverrides {
                lambda,
                tikhonov_lambda,
                add_lowpass,
                ..ConfigOverrides::none()
            };
            let effective = resolve_config(config.as_deref(), &overrides)?;
            let mut man = Manifest::new("encode");
            man.record_input(&volume)?;
            man.record_input(&mask)?;
            man.record_input(&dict.join("dict.npy"))?;
            man.record_config(&effective.to_json_string());
            let vol = load_hu_volume(&volume)?;
            let mask_vol = load_mask(&mask)?;
            let (dictionary, meta) = load_dictionary(&dict)?;
            let params = EncodeParams {
                clip_hu: effective.clip_hu,
                tikhonov_lambda: effective.tikhonov_lambda,
                add_lowpass: effective.add_lowpass,
                keep_maps: save_maps,
                solver: solver_from_config(&effective),
                threads,
            };
            let encoded = encode_volume(&vol, &mask_vol, &dictionary, &meta, &params)?;
            ensure_out_dir(&out)?;
            let recon_path = out.join("reconstruction.npy");
            encoded.reconstruction.write_npy(&recon_path)?;
            man.record_output(&recon_path);
            if let Some(maps) = &encoded.maps {
                let (k, h, w) = maps[0].maps().dim();
                let mut stack = ndarray::Array4::zeros((maps.len(), k, h, w));
                for (i, m) in maps.iter().enumerate() {
                    stack.index_axis_mut(ndarray::Axis(0), i).assign(m.maps());
                }
                let maps_path = out.join("maps.npy");
                write_npy(&maps_path, &NpyArray::F64(stack.into_dyn()))?;
                man.record_output(&maps_path);
            }
            let stats_path = out.join("stats.json");
            std::fs::write(
                &stats_path,
                serde_json::to_string_pretty(&serde_json::json!({
                    "crop_box": encoded.crop_box,
                    "add_lowpass": encoded.add_lowpass,
                    "dict": encoded.dict_ref,
                    "per_slice": encoded.per_slice_stats,
                }))
                .expect("serializable"),
            )
            .map_err(Error::io(&stats_path))?;
            man.record_output(&stats_path);
            man.write(&out.join("manifest.json"))?;
            println!(
                "{}",
                serde_json::json!({
                    "slices": encoded.per_slice_stats.len(),
                    "voi_dims": encoded.reconstruction.dims(),
                    "out": out,
                })
            );
            Ok(())
        }
        Command::Render {
            volume,
            axis,
            index,
            window,
            out,
        } => {
            let mut man = Manifest::new("render");
            man.record_input(&volume)?;
            let vol = load_raw_volume(&volume)?;
            render_slice(&vol, axis.into(), index, window, &out)?;
            man.record_output(&out);
            let manifest_path = out.with_extension("png.manifest.json");
            man.write(&manifest_path)?;
            println!("{}", serde_json::json!({"out": out}));
            Ok(())
        }
        Command::Mip {
            volume,
            axis,
            slab,
            out,
        } => {
            let mut man = Manifest::new("mip");
            man.record_input(&volume)?;
            let vol = load_raw_volume(&volume)?;
            let projection = mip_project(&vol, axis.into(), slab)?;
            write_npy(&out, &NpyArray::F64(projection.into_dyn()))?;
            man.record_output(&out);
            man.write(&out.with_extension("npy.manifest.json"))?;
            println!("{}", serde_json::json!({"out": out}));
            Ok(())
        }
        Command::Dice { pred, gt, smooth } => {
            let p = read_npy(&pred)?.to_f64();
            let g = read_npy(&gt)?.to_f64();
            let result = dice(p.view(), g.view(), smooth)?;
            println!(
                "{}",
                serde_json::json!({
                    "dice": result.dice,
                    "loss": result.loss,
                    "voxels_pred": result.pred_weight,
                    "voxels_gt": result.gt_weight,
                })
            );
            Ok(())
        }
        Command::Stats { maps } => {
            let arr = read_npy(&maps)?.to_f64();
            let stats: SparsityStats = match arr.ndim() {
                3 => {
                    let m = arr
                        .into_dimensionality::<ndarray::Ix3>()
                        .expect("checked ndim");
                    sparsity_stats(&CoefficientMaps::new(m, f64::NAN))
                }
                4 => {
                    let m = arr
                        .into_dimensionality::<ndarray::Ix4>()
                        .expect("checked ndim");
                    let (s, k, h, w) = m.dim();
                    // Fold the slice axis away so per-atom totals aggregate
                    // across the whole volume.
                    let mut zero = 0usize;
                    let mut l1 = 0.0;
                    let mut max_abs = 0.0f64;
                    let mut per_atom = vec![0.0; k];
                    for si in 0..s {
                        for ki in 0..k {
                            for hi in 0..h {
                                for wi in 0..w {
                                    let v = m[[si, ki, hi, wi]];
                                    if v == 0.0 {
                                        zero += 1;
                                    }
                                    l1 += v.abs();
                                    per_atom[ki] += v.abs();
                                    max_abs = max_abs.max(v.abs());
                                }
                            }
                        }
                    }
                    SparsityStats {
                        zero_fraction: zero as f64 / (s * k * h * w) as f64,
                        l1_norm: l1,
                        max_abs,
                        per_atom_l1: per_atom,
                    }
                }
                other => {
                    return Err(Error::ShapeMismatch(format!(
                        "expected K x H x W or S x K x H x W maps, got {other} dims"
                    )))
                }
            };
            println!(
                "{}",
                serde_json::json!({
                    "zero_fraction": stats.zero_fraction,
                    "l1_norm": stats.l1_norm,
                    "max_abs": stats.max_abs,
                    "per_atom_l1": stats.per_atom_l1,
                })
            );
            Ok(())
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successes, not usage errors.
            if matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                std::process::exit(0);
            }
            eprint!("{err}");
            std::process::exit(1);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(if err.is_numerical() { 3 } else { 2 });
    }
}
