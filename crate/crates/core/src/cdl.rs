//! Convolutional dictionary learning.
//!
//! Alternates a per-patch coding pass (see [`crate::csc`]) with a constrained
//! dictionary update, both under circular convolution. The dictionary update
//! is itself an ADMM on the split `d = g` where `g` is kept feasible (unit
//! l2 norm, support anchored at (0, 0) of the padded domain) by projection.
//! Both alternation steps are safeguarded so the learning objective never
//! increases: a coding result that scores worse than the previous maps is
//! discarded patch-wise, and a dictionary candidate that worsens the data
//! fit is discarded in favor of the incumbent.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::csc::{csc_functional, csc_solve, CoefficientMaps, Dictionary, SolverConfig};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::spectral::{Fft2, HermitianFactor};

/// Learning hyperparameters. Defaults: 36 atoms of 5x5 pixels, zero-mean
/// random init, lambda 0.2.
#[derive(Debug, Clone)]
pub struct CdlConfig {
    pub atom_count: usize,
    pub atom_size: usize,
    pub lambda: f64,
    /// Initial penalty of the dictionary-update ADMM.
    pub sigma0: f64,
    pub outer_iters: usize,
    /// Inner solver settings for the per-patch coding pass.
    pub coding: SolverConfig,
    /// Inner solver settings for the dictionary update.
    pub dict_inner: DictSolverConfig,
    pub seed: u64,
}

impl Default for CdlConfig {
    fn default() -> Self {
        Self {
            atom_count: 36,
            atom_size: 5,
            lambda: 0.2,
            sigma0: 1.0,
            outer_iters: 200,
            coding: SolverConfig::for_lambda(0.2),
            dict_inner: DictSolverConfig::default(),
            seed: 0,
        }
    }
}

impl CdlConfig {
    /// Defaults with coupled sparsity weight.
    pub fn for_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            coding: SolverConfig::for_lambda(lambda),
            ..Self::default()
        }
    }
}

/// ADMM settings for the dictionary-update stage.
#[derive(Debug, Clone)]
pub struct DictSolverConfig {
    pub adapt_sigma: bool,
    pub mu: f64,
    pub tau: f64,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
}

impl Default for DictSolverConfig {
    fn default() -> Self {
        Self {
            adapt_sigma: true,
            mu: 10.0,
            tau: 2.0,
            max_iter: 300,
            eps_abs: 1e-7,
            eps_rel: 1e-7,
        }
    }
}

/// Outcome of one [`project_constraint`] call.
#[derive(Debug, Clone)]
pub enum Projected {
    /// Support crop of the candidate, rescaled to unit norm.
    Kept(Array2<f64>),
    /// The support content was the zero vector; a fresh seeded zero-mean
    /// unit-norm atom took its place.
    Reinitialized(Array2<f64>),
}

impl Projected {
    pub fn atom(&self) -> &Array2<f64> {
        match self {
            Projected::Kept(a) | Projected::Reinitialized(a) => a,
        }
    }

    pub fn into_atom(self) -> Array2<f64> {
        match self {
            Projected::Kept(a) | Projected::Reinitialized(a) => a,
        }
    }
}

/// Convergence evidence of one dictionary update.
#[derive(Debug, Clone, Default)]
pub struct DictUpdateReport {
    pub iterations_run: usize,
    pub primal_residuals: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    pub sigma_history: Vec<f64>,
    pub converged: bool,
    /// Atoms that hit the zero-support reinitialization path at any point.
    pub reinitialized_atoms: Vec<usize>,
    /// Data-fit term at the incumbent dictionary.
    pub data_fit_before: f64,
    /// Data-fit term at the returned dictionary.
    pub data_fit_after: f64,
    /// False when the ADMM candidate worsened the fit and the incumbent was kept.
    pub accepted: bool,
}

/// Per-outer-iteration learning record.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CdlOuterRecord {
    /// Learning objective at this iteration's dictionary and maps.
    pub functional: f64,
    pub coding_max_primal: f64,
    pub coding_max_iterations: usize,
    pub dict_iterations: usize,
    pub dict_final_primal: f64,
    pub dict_accepted: bool,
    pub reinitialized_atoms: Vec<usize>,
    /// Worst per-atom deviation from unit norm after the update.
    pub max_atom_norm_error: f64,
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct CdlReport {
    pub outer: Vec<CdlOuterRecord>,
}

fn zero_mean_unit_atom(rng: &mut SplitMix64, h: usize, w: usize) -> Result<Array2<f64>> {
    if h * w <= 1 {
        return Err(Error::DictionaryInit(format!(
            "a zero-mean unit-norm atom needs support > 1, got {h}x{w}"
        )));
    }
    for _ in 0..100 {
        let mut atom = Array2::from_shape_simple_fn((h, w), || rng.next_normal());
        let mean = atom.sum() / (h * w) as f64;
        atom.mapv_inplace(|v| v - mean);
        let norm = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            atom.mapv_inplace(|v| v / norm);
            return Ok(atom);
        }
    }
    Err(Error::DictionaryInit(
        "random atom collapsed to zero repeatedly".into(),
    ))
}

/// Draw `k` i.i.d. standard-normal atoms, subtract each atom's mean, then
/// rescale to unit l2 norm. Deterministic under the seed.
pub fn init_dictionary(k: usize, atom_size: usize, seed: u64) -> Result<Dictionary> {
    if k < 1 || atom_size < 1 {
        return Err(Error::InvalidArgument(format!(
            "init_dictionary needs k >= 1 and atom_size >= 1, got k={k}, atom_size={atom_size}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut atoms = Array3::zeros((k, atom_size, atom_size));
    for idx in 0..k {
        let atom = zero_mean_unit_atom(&mut rng, atom_size, atom_size)?;
        atoms.index_axis_mut(Axis(0), idx).assign(&atom);
    }
    Dictionary::new(atoms)
}

/// Project a full-size candidate onto the feasible set: zero everything
/// outside the `(h, w)` support window anchored at (0, 0), then rescale the
/// support to unit norm. A candidate whose support content is the zero
/// vector is replaced by a fresh seeded zero-mean unit-norm atom.
pub fn project_constraint(
    candidate: ArrayView2<'_, f64>,
    support: (usize, usize),
    reinit_rng: &mut SplitMix64,
) -> Result<Projected> {
    let (h, w) = support;
    if h > candidate.nrows() || w > candidate.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "support ({h}, {w}) exceeds candidate dims {:?}",
            candidate.dim()
        )));
    }
    let mut atom = candidate.slice(s![..h, ..w]).to_owned();
    let norm = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(Projected::Reinitialized(zero_mean_unit_atom(
            reinit_rng, h, w,
        )?));
    }
    atom.mapv_inplace(|v| v / norm);
    Ok(Projected::Kept(atom))
}

fn pad_to(atom: ArrayView2<'_, f64>, h: usize, w: usize) -> Array2<f64> {
    let mut out = Array2::zeros((h, w));
    out.slice_mut(s![..atom.nrows(), ..atom.ncols()]).assign(&atom);
    out
}

/// Frequency-domain data-fit term `sum_j 0.5*||sum_k g_k (*) x_kj - s_j||^2`
/// evaluated by Parseval, with `ghat_t`/`xhat_t` stored as (HW, K) rows.
fn data_fit(
    ghat_t: &Array2<Complex64>,
    xhat_t: &[Array2<Complex64>],
    shat: &[Vec<Complex64>],
    hw: usize,
) -> f64 {
    let gflat = ghat_t.as_slice().expect("layout");
    let k = ghat_t.ncols();
    let mut total = 0.0;
    for (xj, sj) in xhat_t.iter().zip(shat) {
        let xflat = xj.as_slice().expect("layout");
        let mut acc = 0.0;
        for (idx, sval) in sj.iter().enumerate().take(hw) {
            let mut dot = Complex64::ZERO;
            let base = idx * k;
            for q in 0..k {
                dot += gflat[base + q] * xflat[base + q];
            }
            acc += (dot - sval).norm_sqr();
        }
        total += acc;
    }
    total / (2.0 * hw as f64)
}

/// Transposed spectra of padded atoms: rows are frequencies, columns atoms.
fn spectra_rows(atoms: &Array3<f64>, fft: &Fft2) -> Array2<Complex64> {
    let (k_count, _, _) = atoms.dim();
    let (h, w) = fft.dims();
    let hw = h * w;
    let mut rows = Array2::zeros((hw, k_count));
    for k in 0..k_count {
        let spec = fft.forward(pad_to(atoms.index_axis(Axis(0), k), h, w).view());
        let sflat = spec.as_slice().expect("layout");
        for idx in 0..hw {
            rows[[idx, k]] = sflat[idx];
        }
    }
    rows
}

/// One constrained dictionary update by ADMM on the split `d = g`, `g`
/// feasible. The quadratic d-update solves a Hermitian K x K system per
/// frequency whose Gram matrix is fixed for the whole call; the g-update is
/// [`project_constraint`]. Returns the candidate only when it does not
/// worsen the data fit, otherwise the incumbent dictionary.
pub fn dict_update(
    training_maps: &[CoefficientMaps],
    training_images: &[Array2<f64>],
    current: &Dictionary,
    sigma0: f64,
    inner: &DictSolverConfig,
    reinit_rng: &mut SplitMix64,
) -> Result<(Dictionary, DictUpdateReport)> {
    if training_maps.is_empty() || training_maps.len() != training_images.len() {
        return Err(Error::ShapeMismatch(format!(
            "need matching nonempty map/image lists, got {} maps and {} images",
            training_maps.len(),
            training_images.len()
        )));
    }
    if sigma0 <= 0.0 || !sigma0.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma0 must be > 0, got {sigma0}")));
    }
    let (h, w) = training_images[0].dim();
    let k_count = current.atom_count();
    let (ah, aw) = current.support();
    for (j, (m, img)) in training_maps.iter().zip(training_images).enumerate() {
        if img.dim() != (h, w) || m.maps().dim() != (k_count, h, w) {
            return Err(Error::ShapeMismatch(format!(
                "patch {j}: maps {:?} / image {:?} inconsistent with ({k_count}, {h}, {w})",
                m.maps().dim(),
                img.dim()
            )));
        }
    }
    let hw = h * w;
    let fft = Fft2::new(h, w);

    // Per-patch spectra, frequency-major. All loops over j stay in input
    // order, so the accumulations are deterministic.
    let xhat_t: Vec<Array2<Complex64>> = training_maps
        .par_iter()
        .map(|m| {
            let mut rows = Array2::zeros((hw, k_count));
            for k in 0..k_count {
                let spec = fft.forward(m.maps().index_axis(Axis(0), k));
                let sflat = spec.as_slice().expect("layout");
                for idx in 0..hw {
                    rows[[idx, k]] = sflat[idx];
                }
            }
            rows
        })
        .collect();
    let shat: Vec<Vec<Complex64>> = training_images
        .par_iter()
        .map(|img| fft.forward(img.view()).into_raw_vec_and_offset().0)
        .collect();

    // b_data[idx, k] = sum_j conj(xhat_jk) * shat_j, and the per-frequency
    // Gram matrix gram[idx][p, q] = sum_j conj(x_jp) * x_jq.
    let mut b_data = Array2::<Complex64>::zeros((hw, k_count));
    let mut gram = vec![Complex64::ZERO; hw * k_count * k_count];
    {
        let bflat = b_data.as_slice_mut().expect("layout");
        gram.par_chunks_mut(k_count * k_count)
            .zip(bflat.par_chunks_mut(k_count))
            .enumerate()
            .for_each(|(idx, (gchunk, bchunk))| {
                for (xj, sj) in xhat_t.iter().zip(&shat) {
                    let row = &xj.as_slice().expect("layout")[idx * k_count..(idx + 1) * k_count];
                    let s = sj[idx];
                    for p in 0..k_count {
                        let cp = row[p].conj();
                        bchunk[p] += cp * s;
                        for q in 0..k_count {
                            gchunk[p * k_count + q] += cp * row[q];
                        }
                    }
                }
            });
    }

    let mut sigma = sigma0;
    let factorize = |sig: f64| -> Vec<HermitianFactor> {
        gram.par_chunks(k_count * k_count)
            .map(|chunk| HermitianFactor::new(chunk, k_count, sig))
            .collect()
    };
    let mut factors = factorize(sigma);

    // Cold start: g = h = 0, so with all-zero maps the first d-update
    // collapses and every atom goes through the reinitialization path.
    let mut g = Array3::<f64>::zeros((k_count, h, w));
    let mut dual = Array3::<f64>::zeros((k_count, h, w));
    let mut d = Array3::<f64>::zeros((k_count, h, w));
    let mut reinit_flags = vec![false; k_count];
    let sqrt_n = (k_count as f64 * hw as f64).sqrt();
    let mut report = DictUpdateReport {
        accepted: true,
        ..DictUpdateReport::default()
    };

    let mut rhs_rows = Array2::<Complex64>::zeros((hw, k_count));
    for iter in 1..=inner.max_iter {
        // d-update right-hand side: b_data + sigma * fft(g - dual).
        for k in 0..k_count {
            let diff = &g.index_axis(Axis(0), k) - &dual.index_axis(Axis(0), k);
            let spec = fft.forward(diff.view());
            let sflat = spec.as_slice().expect("layout");
            for idx in 0..hw {
                rhs_rows[[idx, k]] = b_data[[idx, k]] + sigma * sflat[idx];
            }
        }
        rhs_rows
            .as_slice_mut()
            .expect("layout")
            .par_chunks_mut(k_count)
            .zip(factors.par_iter())
            .for_each(|(row, factor)| factor.solve_into(row));
        for k in 0..k_count {
            let mut plane = Array2::<Complex64>::zeros((h, w));
            {
                let pflat = plane.as_slice_mut().expect("layout");
                for idx in 0..hw {
                    pflat[idx] = rhs_rows[[idx, k]];
                }
            }
            d.index_axis_mut(Axis(0), k).assign(&fft.inverse_real(plane.view()));
        }

        // g-update: project d + dual onto the feasible set.
        let mut primal_sq = 0.0;
        let mut dual_sq = 0.0;
        for (k, flag) in reinit_flags.iter_mut().enumerate() {
            let candidate = &d.index_axis(Axis(0), k) + &dual.index_axis(Axis(0), k);
            let projected = project_constraint(candidate.view(), (ah, aw), reinit_rng)?;
            if matches!(projected, Projected::Reinitialized(_)) {
                *flag = true;
            }
            let g_new = pad_to(projected.atom().view(), h, w);
            let mut g_plane = g.index_axis_mut(Axis(0), k);
            ndarray::Zip::from(&mut g_plane).and(&g_new).for_each(|old, &new| {
                let diff = new - *old;
                dual_sq += diff * diff;
                *old = new;
            });
            let d_plane = d.index_axis(Axis(0), k);
            let mut h_plane = dual.index_axis_mut(Axis(0), k);
            ndarray::Zip::from(&mut h_plane)
                .and(&d_plane)
                .and(&g_plane.view())
                .for_each(|hd, &dv, &gv| {
                    let r = dv - gv;
                    primal_sq += r * r;
                    *hd += r;
                });
        }

        let primal = primal_sq.sqrt();
        let dual_res = sigma * dual_sq.sqrt();
        if !primal.is_finite() || !dual_res.is_finite() {
            return Err(Error::NumericalDivergence {
                iteration: iter,
                context: format!("dictionary update: primal={primal}, dual={dual_res}"),
            });
        }
        report.primal_residuals.push(primal);
        report.dual_residuals.push(dual_res);
        report.sigma_history.push(sigma);
        report.iterations_run = iter;

        let d_norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h_norm = dual.iter().map(|v| v * v).sum::<f64>().sqrt();
        let eps_pri = sqrt_n * inner.eps_abs + inner.eps_rel * d_norm.max(g_norm);
        let eps_dua = sqrt_n * inner.eps_abs + inner.eps_rel * sigma * h_norm;
        if primal <= eps_pri && dual_res <= eps_dua {
            report.converged = true;
            break;
        }

        if inner.adapt_sigma {
            let mut changed = false;
            if primal > inner.mu * dual_res {
                sigma *= inner.tau;
                let inv = 1.0 / inner.tau;
                dual.mapv_inplace(|v| v * inv);
                changed = true;
            } else if dual_res > inner.mu * primal {
                sigma /= inner.tau;
                dual.mapv_inplace(|v| v * inner.tau);
                changed = true;
            }
            if changed {
                factors = factorize(sigma);
            }
        }
    }

    // Safeguard: never return a dictionary that fits the data worse than the
    // incumbent. Ties go to the candidate so degenerate updates (all-zero
    // maps) still surface their reinitialized atoms.
    let ghat_t = {
        let mut cropped = Array3::zeros((k_count, ah, aw));
        for k in 0..k_count {
            cropped
                .index_axis_mut(Axis(0), k)
                .assign(&g.index_axis(Axis(0), k).slice(s![..ah, ..aw]));
        }
        spectra_rows(&cropped, &fft)
    };
    let current_rows = spectra_rows(current.atoms(), &fft);
    let fit_candidate = data_fit(&ghat_t, &xhat_t, &shat, hw);
    let fit_current = data_fit(&current_rows, &xhat_t, &shat, hw);
    report.data_fit_before = fit_current;

    let result = if fit_candidate <= fit_current {
        report.data_fit_after = fit_candidate;
        report.reinitialized_atoms = reinit_flags
            .iter()
            .enumerate()
            .filter_map(|(k, &f)| f.then_some(k))
            .collect();
        let mut atoms = Array3::zeros((k_count, ah, aw));
        for k in 0..k_count {
            atoms
                .index_axis_mut(Axis(0), k)
                .assign(&g.index_axis(Axis(0), k).slice(s![..ah, ..aw]));
        }
        Dictionary::new(atoms)?
    } else {
        report.accepted = false;
        report.data_fit_after = fit_current;
        current.clone()
    };
    Ok((result, report))
}

/// Learn a dictionary from highpass training patches.
///
/// Each outer iteration codes every patch against the current dictionary
/// (warm-started from the previous maps, in parallel) and then runs one
/// [`dict_update`]. The learning objective is recorded per iteration and is
/// non-increasing by construction of the two safeguards. Atom
/// reinitialization draws from a SplitMix64 stream seeded with `seed + 1`
/// so it never perturbs the init stream.
pub fn cdl_learn(
    patches: &[Array2<f64>],
    config: &CdlConfig,
) -> Result<(Dictionary, Vec<CoefficientMaps>, CdlReport)> {
    if patches.is_empty() {
        return Err(Error::InvalidArgument("cdl_learn needs at least one patch".into()));
    }
    let (h, w) = patches[0].dim();
    if config.atom_size > h || config.atom_size > w {
        return Err(Error::ShapeMismatch(format!(
            "atom size {} exceeds patch dims ({h}, {w})",
            config.atom_size
        )));
    }
    for (j, p) in patches.iter().enumerate() {
        if p.dim() != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "patch {j} has dims {:?}, expected ({h}, {w})",
                p.dim()
            )));
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidData(format!("patch {j} has non-finite values")));
        }
    }

    let mut dict = init_dictionary(config.atom_count, config.atom_size, config.seed)?;
    let mut reinit_rng = SplitMix64::new(config.seed.wrapping_add(1));
    let mut maps: Vec<Option<CoefficientMaps>> = vec![None; patches.len()];
    let mut report = CdlReport::default();

    for _outer in 0..config.outer_iters {
        // Coding pass; keep the previous maps for any patch the solver
        // failed to improve, so the objective cannot rise here.
        let coded: Vec<(CoefficientMaps, usize, f64)> = patches
            .par_iter()
            .zip(maps.par_iter())
            .map(|(patch, warm)| {
                let (cand, rep) =
                    csc_solve(&dict, patch.view(), &config.coding, warm.as_ref())?;
                let cand_f = csc_functional(&dict, &cand, patch.view(), config.lambda)?;
                if let Some(prev) = warm {
                    let prev_f = csc_functional(&dict, prev, patch.view(), config.lambda)?;
                    if prev_f < cand_f {
                        return Ok((prev.clone(), rep.iterations_run, rep.primal_residuals.last().copied().unwrap_or(0.0)));
                    }
                }
                let primal = rep.primal_residuals.last().copied().unwrap_or(0.0);
                Ok((cand, rep.iterations_run, primal))
            })
            .collect::<Result<_>>()?;
        let mut coding_max_primal = 0.0f64;
        let mut coding_max_iterations = 0usize;
        for (j, (m, iters, primal)) in coded.into_iter().enumerate() {
            coding_max_primal = coding_max_primal.max(primal);
            coding_max_iterations = coding_max_iterations.max(iters);
            maps[j] = Some(m);
        }
        let maps_now: Vec<CoefficientMaps> = maps
            .iter()
            .map(|m| m.as_ref().expect("coding pass filled every slot").clone())
            .collect();

        let (new_dict, dreport) = dict_update(
            &maps_now,
            patches,
            &dict,
            config.sigma0,
            &config.dict_inner,
            &mut reinit_rng,
        )?;
        dict = new_dict;

        let l1_total: f64 = maps_now
            .iter()
            .map(|m| m.maps().iter().map(|v| v.abs()).sum::<f64>())
            .sum();
        let functional = dreport.data_fit_after + config.lambda * l1_total;
        let max_atom_norm_error = dict
            .atoms()
            .outer_iter()
            .map(|atom| (atom.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0f64, f64::max);
        report.outer.push(CdlOuterRecord {
            functional,
            coding_max_primal,
            coding_max_iterations,
            dict_iterations: dreport.iterations_run,
            dict_final_primal: dreport.primal_residuals.last().copied().unwrap_or(0.0),
            dict_accepted: dreport.accepted,
            reinitialized_atoms: dreport.reinitialized_atoms.clone(),
            max_atom_norm_error,
        });
    }

    let final_maps = maps
        .into_iter()
        .map(|m| m.expect("filled"))
        .collect();
    Ok((dict, final_maps, report))
}

/// Keep exactly the atoms whose coefficient map is nonzero somewhere in some
/// training patch; the zeros are literal, so the comparison is exact.
pub fn prune(
    dict: &Dictionary,
    maps: &[CoefficientMaps],
) -> Result<(Dictionary, Vec<usize>)> {
    let k_count = dict.atom_count();
    for (j, m) in maps.iter().enumerate() {
        if m.atom_count() != k_count {
            return Err(Error::ShapeMismatch(format!(
                "maps {j} cover {} atoms, dictionary has {k_count}",
                m.atom_count()
            )));
        }
    }
    let kept: Vec<usize> = (0..k_count)
        .filter(|&k| {
            maps.iter().any(|m| {
                m.maps()
                    .index_axis(Axis(0), k)
                    .iter()
                    .any(|&v| v != 0.0)
            })
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyDictionary(
            "every coefficient map is identically zero".into(),
        ));
    }
    let (ah, aw) = dict.support();
    let mut atoms = Array3::zeros((kept.len(), ah, aw));
    for (out_idx, &k) in kept.iter().enumerate() {
        atoms.index_axis_mut(Axis(0), out_idx).assign(&dict.atom(k));
    }
    Ok((Dictionary::new(atoms)?, kept))
}

fn flip_ud(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let (h, w) = a.dim();
    Array2::from_shape_fn((h, w), |(i, j)| a[[h - 1 - i, j]])
}

fn flip_lr(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let (h, w) = a.dim();
    Array2::from_shape_fn((h, w), |(i, j)| a[[i, w - 1 - j]])
}

/// 90 degrees counterclockwise; square atoms only.
fn rot90(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = a.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| a[[j, n - 1 - i]])
}

fn atom_bits(a: &Array2<f64>) -> Vec<u64> {
    a.iter().map(|v| v.to_bits()).collect()
}

/// Enlarge the dictionary with transformed copies of each atom and drop
/// exact (bitwise) duplicates.
///
/// The default transform set is `{identity, up-down flip, left-right flip,
/// 90-degree rotation}`; `full_orbit` swaps in the whole 8-element dihedral
/// group. Rotations and transpositions require square atoms and are skipped
/// otherwise. Flips and rotations permute entries, so every output atom
/// keeps unit norm exactly.
pub fn augment(dict: &Dictionary, full_orbit: bool) -> Result<Dictionary> {
    let (ah, aw) = dict.support();
    let square = ah == aw;
    let mut out: Vec<Array2<f64>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for atom in dict.atoms().outer_iter() {
        let mut variants: Vec<Array2<f64>> = vec![atom.to_owned(), flip_ud(atom), flip_lr(atom)];
        if square {
            variants.push(rot90(atom));
        }
        if full_orbit {
            let r180 = flip_ud(flip_lr(atom).view());
            variants.push(r180.clone());
            if square {
                variants.push(rot90(rot90(rot90(atom).view()).view())); // 270
                variants.push(rot90(flip_lr(atom).view())); // transpose
                variants.push(rot90(flip_ud(atom).view())); // anti-transpose
            }
        }
        for v in variants {
            if seen.insert(atom_bits(&v)) {
                out.push(v);
            }
        }
    }
    let mut atoms = Array3::zeros((out.len(), ah, aw));
    for (idx, atom) in out.iter().enumerate() {
        atoms.index_axis_mut(Axis(0), idx).assign(atom);
    }
    Dictionary::new(atoms)
}
