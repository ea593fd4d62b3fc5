//! ADMM solver for convolutional sparse coding.
//!
//! Encodes an image `s` as `sum_k d_k (*) x_k` with small unit-norm filters
//! `d_k` and image-sized sparse coefficient maps `x_k`, minimizing
//! `0.5*||sum_k d_k (*) x_k - s||^2 + lambda * sum_k ||x_k||_1` under
//! circular convolution. The quadratic x-update diagonalizes per DFT
//! frequency into rank-one systems solved by Sherman-Morrison; the l1 step
//! is a soft threshold, so the returned maps carry literal zeros.

use ndarray::{Array2, Array3, ArrayView2, Dimension};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{rank1_solve_into, Fft2};

/// K small-support filters with unit l2 norm, anchored at index (0, 0) of
/// the padded image domain everywhere they are used.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array3<f64>,
}

/// Tolerance on the unit-norm invariant of stored atoms.
pub const ATOM_NORM_TOL: f64 = 1e-9;

impl Dictionary {
    pub fn new(atoms: Array3<f64>) -> Result<Self> {
        let (k, h, w) = atoms.dim();
        if k == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidData(format!(
                "dictionary dims must all be >= 1, got {:?}",
                atoms.dim()
            )));
        }
        if !atoms.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidData("dictionary has non-finite entries".into()));
        }
        for (idx, atom) in atoms.outer_iter().enumerate() {
            let norm = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > ATOM_NORM_TOL {
                return Err(Error::InvalidData(format!(
                    "atom {idx} has l2 norm {norm}, expected 1 within {ATOM_NORM_TOL:e}"
                )));
            }
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &Array3<f64> {
        &self.atoms
    }

    pub fn atom(&self, k: usize) -> ArrayView2<'_, f64> {
        self.atoms.index_axis(ndarray::Axis(0), k)
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.dim().0
    }

    pub fn support(&self) -> (usize, usize) {
        let (_, h, w) = self.atoms.dim();
        (h, w)
    }

    /// Spectra of the atoms zero-padded to `(h, w)`, anchored at (0, 0).
    pub(crate) fn spectra(&self, fft: &Fft2) -> Array3<Complex64> {
        let (k_count, ah, aw) = self.atoms.dim();
        let (h, w) = fft.dims();
        let mut out = Array3::zeros((k_count, h, w));
        let mut padded = Array2::<f64>::zeros((h, w));
        for k in 0..k_count {
            padded.fill(0.0);
            padded
                .slice_mut(ndarray::s![..ah, ..aw])
                .assign(&self.atom(k));
            out.index_axis_mut(ndarray::Axis(0), k)
                .assign(&fft.forward(padded.view()));
        }
        out
    }
}

/// Image-sized sparse codes; zeros are exact where the final threshold
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMaps {
    maps: Array3<f64>,
    lambda_used: f64,
}

impl CoefficientMaps {
    pub fn new(maps: Array3<f64>, lambda_used: f64) -> Self {
        Self { maps, lambda_used }
    }

    pub fn maps(&self) -> &Array3<f64> {
        &self.maps
    }

    pub fn into_maps(self) -> Array3<f64> {
        self.maps
    }

    pub fn lambda_used(&self) -> f64 {
        self.lambda_used
    }

    pub fn atom_count(&self) -> usize {
        self.maps.dim().0
    }

    /// Exact fraction of literally-zero entries.
    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.maps.iter().filter(|&&v| v == 0.0).count();
        zeros as f64 / self.maps.len() as f64
    }
}

/// ADMM parameters for one coding solve.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub lambda: f64,
    pub rho0: f64,
    pub adapt_rho: bool,
    pub mu: f64,
    pub tau: f64,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::for_lambda(0.2)
    }
}

impl SolverConfig {
    /// Defaults with the penalty tied to the sparsity weight.
    pub fn for_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            rho0: 10.0 * lambda + 0.1,
            adapt_rho: true,
            mu: 10.0,
            tau: 2.0,
            max_iter: 500,
            eps_abs: 1e-5,
            eps_rel: 1e-4,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lambda > 0.0
            && self.rho0 > 0.0
            && self.mu > 1.0
            && self.tau > 1.0
            && self.max_iter > 0
            && self.eps_abs >= 0.0
            && self.eps_rel >= 0.0
            && [self.lambda, self.rho0, self.mu, self.tau, self.eps_abs, self.eps_rel]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid solver config {self:?}")))
        }
    }
}

/// Per-iteration convergence evidence of one ADMM run.
#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub iterations_run: usize,
    pub primal_residuals: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    pub rho_history: Vec<f64>,
    pub functional_values: Vec<f64>,
    pub converged: bool,
}

/// Elementwise `sign(v) * max(|v| - t, 0)`; entries inside the dead zone
/// come out exactly zero.
pub fn soft_threshold<D: Dimension>(values: &ndarray::Array<f64, D>, t: f64) -> Result<ndarray::Array<f64, D>> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "soft threshold requires t >= 0, got {t}"
        )));
    }
    Ok(values.mapv(|v| soft_threshold_scalar(v, t)))
}

#[inline]
fn soft_threshold_scalar(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn check_shapes(dict: &Dictionary, maps: &CoefficientMaps, image_dims: (usize, usize)) -> Result<()> {
    let (k, mh, mw) = maps.maps().dim();
    let (h, w) = image_dims;
    let (ah, aw) = dict.support();
    if k != dict.atom_count() || (mh, mw) != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "maps {:?} vs dictionary K={} and image {:?}",
            maps.maps().dim(),
            dict.atom_count(),
            image_dims
        )));
    }
    if ah > h || aw > w {
        return Err(Error::ShapeMismatch(format!(
            "atom support ({ah}, {aw}) exceeds image dims ({h}, {w})"
        )));
    }
    Ok(())
}

/// Circular-convolution synthesis `sum_k d_k (*) x_k`.
pub fn reconstruct(dict: &Dictionary, maps: &CoefficientMaps) -> Result<Array2<f64>> {
    let (_, h, w) = maps.maps().dim();
    check_shapes(dict, maps, (h, w))?;
    let fft = Fft2::new(h, w);
    let dhat = dict.spectra(&fft);
    let mut acc = Array2::<Complex64>::zeros((h, w));
    for k in 0..dict.atom_count() {
        let xhat = fft.forward(maps.maps().index_axis(ndarray::Axis(0), k));
        acc.zip_mut_with(
            &(&dhat.index_axis(ndarray::Axis(0), k) * &xhat),
            |a, &b| *a += b,
        );
    }
    Ok(fft.inverse_real(acc.view()))
}

/// The coding objective `0.5*||sum_k d_k (*) x_k - s||^2 + lambda*sum_k ||x_k||_1`.
pub fn csc_functional(
    dict: &Dictionary,
    maps: &CoefficientMaps,
    image: ArrayView2<'_, f64>,
    lambda: f64,
) -> Result<f64> {
    check_shapes(dict, maps, image.dim())?;
    let recon = reconstruct(dict, maps)?;
    let data_term: f64 = recon
        .iter()
        .zip(image.iter())
        .map(|(r, s)| (r - s) * (r - s))
        .sum::<f64>()
        * 0.5;
    let l1: f64 = maps.maps().iter().map(|v| v.abs()).sum();
    Ok(data_term + lambda * l1)
}

fn fro_norm(a: &Array3<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solve the coding problem for one image by ADMM.
///
/// Split `x = y` with scaled dual `u`: the x-update solves one rank-one
/// system per frequency with right-hand side `conj(dhat)*shat + rho*(yhat -
/// uhat)`, the y-update soft-thresholds `x + u` at `lambda/rho`, and the
/// penalty follows the usual residual-ratio adaptation (rescaling `u` when
/// it changes). Stopping combines absolute and relative tolerances on the
/// primal residual `||x - y||` and dual residual `rho*||y - y_prev||`. The
/// returned maps are the thresholded `y` variable, so their zeros are exact.
pub fn csc_solve(
    dict: &Dictionary,
    image: ArrayView2<'_, f64>,
    config: &SolverConfig,
    warm_start: Option<&CoefficientMaps>,
) -> Result<(CoefficientMaps, SolveReport)> {
    config.validate()?;
    if !image.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidData("image contains non-finite values".into()));
    }
    let (h, w) = image.dim();
    let (ah, aw) = dict.support();
    if ah > h || aw > w {
        return Err(Error::ShapeMismatch(format!(
            "atom support ({ah}, {aw}) exceeds image dims ({h}, {w})"
        )));
    }
    let k_count = dict.atom_count();
    if let Some(warm) = warm_start {
        if warm.maps().dim() != (k_count, h, w) {
            return Err(Error::ShapeMismatch(format!(
                "warm start {:?} does not match problem dims ({k_count}, {h}, {w})",
                warm.maps().dim()
            )));
        }
    }

    let fft = Fft2::new(h, w);
    let hw = h * w;
    let dhat = dict.spectra(&fft);
    let shat = fft.forward(image);
    // Constant part of the x-update right-hand side: conj(dhat_k) * shat.
    let mut dconj_s = Array3::<Complex64>::zeros((k_count, h, w));
    {
        let dflat = dhat.as_slice().expect("standard layout");
        let cflat = dconj_s.as_slice_mut().expect("standard layout");
        let sflat = shat.as_slice().expect("standard layout");
        for k in 0..k_count {
            for idx in 0..hw {
                cflat[k * hw + idx] = dflat[k * hw + idx].conj() * sflat[idx];
            }
        }
    }

    let mut y = match warm_start {
        Some(warm) => warm.maps().clone(),
        None => Array3::zeros((k_count, h, w)),
    };
    let mut u = Array3::<f64>::zeros((k_count, h, w));
    let mut yhat = Array3::<Complex64>::zeros((k_count, h, w));
    for k in 0..k_count {
        yhat.index_axis_mut(ndarray::Axis(0), k)
            .assign(&fft.forward(y.index_axis(ndarray::Axis(0), k)));
    }
    // uhat tracks fft(u) through the same linear updates as u itself.
    let mut uhat = Array3::<Complex64>::zeros((k_count, h, w));
    let mut xhat = Array3::<Complex64>::zeros((k_count, h, w));
    let mut x = Array3::<f64>::zeros((k_count, h, w));

    let mut rho = config.rho0;
    let sqrt_n = (k_count as f64 * hw as f64).sqrt();
    let mut report = SolveReport::default();

    let mut freq_dhat = vec![Complex64::ZERO; k_count];
    let mut freq_b = vec![Complex64::ZERO; k_count];
    for iter in 1..=config.max_iter {
        // x-update: per-frequency rank-one system by Sherman-Morrison.
        {
            let dflat = dhat.as_slice().expect("layout");
            let cflat = dconj_s.as_slice().expect("layout");
            let yflat = yhat.as_slice().expect("layout");
            let uflat = uhat.as_slice().expect("layout");
            let xf = xhat.as_slice_mut().expect("layout");
            for idx in 0..hw {
                for k in 0..k_count {
                    let o = k * hw + idx;
                    freq_dhat[k] = dflat[o];
                    freq_b[k] = cflat[o] + rho * (yflat[o] - uflat[o]);
                }
                rank1_solve_into(&freq_dhat, rho, &mut freq_b);
                for k in 0..k_count {
                    xf[k * hw + idx] = freq_b[k];
                }
            }
        }
        for k in 0..k_count {
            x.index_axis_mut(ndarray::Axis(0), k)
                .assign(&fft.inverse_real(xhat.index_axis(ndarray::Axis(0), k)));
        }

        // y-update with the previous dual, then dual ascent.
        let threshold = config.lambda / rho;
        let mut dual_sq = 0.0;
        let mut primal_sq = 0.0;
        ndarray::Zip::from(&mut y).and(&mut u).and(&x).for_each(|yk, uk, &xk| {
            let y_new = soft_threshold_scalar(xk + *uk, threshold);
            let dy = y_new - *yk;
            dual_sq += dy * dy;
            let r = xk - y_new;
            primal_sq += r * r;
            *uk += r;
            *yk = y_new;
        });
        for k in 0..k_count {
            yhat.index_axis_mut(ndarray::Axis(0), k)
                .assign(&fft.forward(y.index_axis(ndarray::Axis(0), k)));
        }
        {
            let xf = xhat.as_slice().expect("layout");
            let yf = yhat.as_slice().expect("layout");
            let uf = uhat.as_slice_mut().expect("layout");
            for i in 0..uf.len() {
                uf[i] += xf[i] - yf[i];
            }
        }

        let primal = primal_sq.sqrt();
        let dual = rho * dual_sq.sqrt();
        let eps_pri = sqrt_n * config.eps_abs + config.eps_rel * fro_norm(&x).max(fro_norm(&y));
        let eps_dua = sqrt_n * config.eps_abs + config.eps_rel * rho * fro_norm(&u);

        // Functional at the sparse iterate, via the spectra already in hand.
        let mut acc = Array2::<Complex64>::zeros((h, w));
        {
            let dflat = dhat.as_slice().expect("layout");
            let yf = yhat.as_slice().expect("layout");
            let af = acc.as_slice_mut().expect("layout");
            for k in 0..k_count {
                for idx in 0..hw {
                    af[idx] += dflat[k * hw + idx] * yf[k * hw + idx];
                }
            }
        }
        let recon = fft.inverse_real(acc.view());
        let data_term: f64 = recon
            .iter()
            .zip(image.iter())
            .map(|(r, s)| (r - s) * (r - s))
            .sum::<f64>()
            * 0.5;
        let functional = data_term + config.lambda * y.iter().map(|v| v.abs()).sum::<f64>();

        if !primal.is_finite() || !dual.is_finite() || !functional.is_finite() {
            return Err(Error::NumericalDivergence {
                iteration: iter,
                context: format!("primal={primal}, dual={dual}, functional={functional}"),
            });
        }

        report.primal_residuals.push(primal);
        report.dual_residuals.push(dual);
        report.rho_history.push(rho);
        report.functional_values.push(functional);
        report.iterations_run = iter;

        if primal <= eps_pri && dual <= eps_dua {
            report.converged = true;
            break;
        }

        if config.adapt_rho {
            if primal > config.mu * dual {
                rho *= config.tau;
                let inv = 1.0 / config.tau;
                u.mapv_inplace(|v| v * inv);
                uhat.mapv_inplace(|v| v * inv);
            } else if dual > config.mu * primal {
                rho /= config.tau;
                u.mapv_inplace(|v| v * config.tau);
                uhat.mapv_inplace(|v| v * config.tau);
            }
        }
    }

    Ok((CoefficientMaps::new(y, config.lambda), report))
}
