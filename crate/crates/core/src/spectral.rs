//! 2D FFT services and frequency-domain linear solvers.
//!
//! Convolutions throughout the crate are circular, so the DFT diagonalizes
//! them; every per-frequency system solved here is a small dense complex
//! system. Transform convention: forward unscaled, inverse carries the
//! `1/(H*W)` factor, matching `numpy.fft`.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Planned forward/inverse transforms for one spatial size.
///
/// Immutable after construction; the contained plans are shareable across
/// threads, so one `Fft2` may serve a whole parallel solve.
#[derive(Clone)]
pub struct Fft2 {
    h: usize,
    w: usize,
    fwd_rows: Arc<dyn Fft<f64>>,
    fwd_cols: Arc<dyn Fft<f64>>,
    inv_rows: Arc<dyn Fft<f64>>,
    inv_cols: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(h: usize, w: usize) -> Self {
        assert!(h >= 1 && w >= 1, "transform dims must be >= 1");
        PLANNER.with(|p| {
            let mut planner = p.borrow_mut();
            Self {
                h,
                w,
                fwd_rows: planner.plan_fft_forward(w),
                fwd_cols: planner.plan_fft_forward(h),
                inv_rows: planner.plan_fft_inverse(w),
                inv_cols: planner.plan_fft_inverse(h),
            }
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    fn pass(
        &self,
        data: &mut Array2<Complex64>,
        rows: &Arc<dyn Fft<f64>>,
        cols: &Arc<dyn Fft<f64>>,
    ) {
        debug_assert_eq!(data.dim(), (self.h, self.w));
        let slice = data.as_slice_mut().expect("standard layout");
        for row in slice.chunks_exact_mut(self.w) {
            rows.process(row);
        }
        let mut col = vec![Complex64::ZERO; self.h];
        for j in 0..self.w {
            for i in 0..self.h {
                col[i] = slice[i * self.w + j];
            }
            cols.process(&mut col);
            for i in 0..self.h {
                slice[i * self.w + j] = col[i];
            }
        }
    }

    /// Forward DFT of a real image (unscaled).
    pub fn forward(&self, image: ArrayView2<'_, f64>) -> Array2<Complex64> {
        let mut data = image.mapv(|v| Complex64::new(v, 0.0));
        self.pass(&mut data, &self.fwd_rows, &self.fwd_cols);
        data
    }

    /// Forward DFT of a complex image (unscaled).
    pub fn forward_complex(&self, image: &Array2<Complex64>) -> Array2<Complex64> {
        let mut data = image.clone();
        self.pass(&mut data, &self.fwd_rows, &self.fwd_cols);
        data
    }

    /// Inverse DFT, scaled by `1/(H*W)`.
    pub fn inverse(&self, spectrum: ArrayView2<'_, Complex64>) -> Array2<Complex64> {
        let mut data = spectrum.to_owned();
        self.pass(&mut data, &self.inv_rows, &self.inv_cols);
        let scale = 1.0 / (self.h * self.w) as f64;
        data.mapv_inplace(|v| v * scale);
        data
    }

    /// Inverse DFT of a Hermitian spectrum, keeping the real part.
    pub fn inverse_real(&self, spectrum: ArrayView2<'_, Complex64>) -> Array2<f64> {
        let scale = 1.0 / (self.h * self.w) as f64;
        let mut data = spectrum.to_owned();
        self.pass(&mut data, &self.inv_rows, &self.inv_cols);
        data.mapv(|v| v.re * scale)
    }
}

/// One-shot forward transform (see [`Fft2::forward`]).
pub fn fft2(image: ArrayView2<'_, f64>) -> Array2<Complex64> {
    Fft2::new(image.nrows(), image.ncols()).forward(image)
}

/// One-shot inverse transform (see [`Fft2::inverse`]).
pub fn ifft2(spectrum: ArrayView2<'_, Complex64>) -> Array2<Complex64> {
    Fft2::new(spectrum.nrows(), spectrum.ncols()).inverse(spectrum)
}

/// Gradient-penalized lowpass/highpass decomposition of one image.
#[derive(Debug, Clone)]
pub struct TikhonovSplit {
    pub lowpass: Array2<f64>,
    pub highpass: Array2<f64>,
    pub lambda_t: f64,
}

/// Split an image into Tikhonov lowpass and highpass components.
///
/// The lowpass solves `min_l 0.5*||l - s||^2 + (lambda_t/2)*(||G_r l||^2 +
/// ||G_c l||^2)` with forward-difference periodic gradients, computed in the
/// DFT domain where the gradient transfer magnitude is `4*sin^2(pi*w/n)`.
/// The split is exact: `lowpass + highpass == input` and the gradient
/// operator annihilates DC, so the lowpass keeps the input mean.
pub fn tikhonov_split(image: ArrayView2<'_, f64>, lambda_t: f64) -> Result<TikhonovSplit> {
    if lambda_t < 0.0 || !lambda_t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tikhonov lambda must be >= 0, got {lambda_t}"
        )));
    }
    if !image.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidData("image contains non-finite values".into()));
    }
    let (h, w) = image.dim();
    let fft = Fft2::new(h, w);
    let mut spectrum = fft.forward(image);
    let row_gain: Vec<f64> = (0..h)
        .map(|u| {
            let s = (std::f64::consts::PI * u as f64 / h as f64).sin();
            4.0 * s * s
        })
        .collect();
    let col_gain: Vec<f64> = (0..w)
        .map(|v| {
            let s = (std::f64::consts::PI * v as f64 / w as f64).sin();
            4.0 * s * s
        })
        .collect();
    for ((u, v), coeff) in spectrum.indexed_iter_mut() {
        *coeff /= 1.0 + lambda_t * (row_gain[u] + col_gain[v]);
    }
    let lowpass = fft.inverse_real(spectrum.view());
    let highpass = &image - &lowpass;
    Ok(TikhonovSplit {
        lowpass,
        highpass,
        lambda_t,
    })
}

/// Sherman-Morrison core shared by [`solve_rank1_system`] and the coding
/// solver's per-frequency x-update; overwrites `b` with the solution.
#[inline]
pub(crate) fn rank1_solve_into(dhat: &[Complex64], rho: f64, b: &mut [Complex64]) {
    // a^H b = sum_k dhat_k * b_k and a^H a = sum_k |dhat_k|^2, since a = conj(dhat).
    let mut ahb = Complex64::ZERO;
    let mut aha = 0.0;
    for (d, rhs) in dhat.iter().zip(b.iter()) {
        ahb += d * rhs;
        aha += d.norm_sqr();
    }
    let gain = ahb / (rho + aha);
    for (d, rhs) in dhat.iter().zip(b.iter_mut()) {
        *rhs = (*rhs - d.conj() * gain) / rho;
    }
}

/// Solve `(a a^H + rho I) x = b` with `a = conj(dhat)` by Sherman-Morrison.
///
/// This is the per-frequency normal-equation system of the coding stage; it
/// is nonsingular for every `rho > 0`.
pub fn solve_rank1_system(dhat: &[Complex64], rho: f64, b: &[Complex64]) -> Vec<Complex64> {
    assert!(rho > 0.0, "rank-1 solve requires rho > 0");
    assert_eq!(dhat.len(), b.len(), "dhat/b length mismatch");
    let mut x = b.to_vec();
    rank1_solve_into(dhat, rho, &mut x);
    x
}

/// Cholesky factor of a Hermitian positive-definite `K x K` system
/// `(gram + shift I)`, reusable across right-hand sides.
pub struct HermitianFactor {
    lower: Vec<Complex64>,
    k: usize,
}

impl HermitianFactor {
    /// Factor `gram + shift*I` where `gram` is row-major `K x K` Hermitian
    /// positive semidefinite and `shift > 0`.
    pub fn new(gram: &[Complex64], k: usize, shift: f64) -> Self {
        assert!(shift > 0.0, "hermitian solve requires a positive shift");
        assert_eq!(gram.len(), k * k);
        let mut lower = vec![Complex64::ZERO; k * k];
        for i in 0..k {
            for j in 0..=i {
                let mut sum = gram[i * k + j];
                if i == j {
                    sum += shift;
                }
                for m in 0..j {
                    sum -= lower[i * k + m] * lower[j * k + m].conj();
                }
                if i == j {
                    // Diagonal of an HPD factor is real and positive.
                    lower[i * k + i] = Complex64::new(sum.re.max(f64::MIN_POSITIVE).sqrt(), 0.0);
                } else {
                    lower[i * k + j] = sum / lower[j * k + j];
                }
            }
        }
        Self { lower, k }
    }

    /// Solve in place: `b` becomes the solution of `(gram + shift I) x = b`.
    pub fn solve_into(&self, b: &mut [Complex64]) {
        let k = self.k;
        assert_eq!(b.len(), k);
        // L z = b
        for i in 0..k {
            let mut sum = b[i];
            for (l, z) in self.lower[i * k..i * k + i].iter().zip(b.iter()) {
                sum -= l * z;
            }
            b[i] = sum / self.lower[i * k + i];
        }
        // L^H x = z
        for i in (0..k).rev() {
            let mut sum = b[i];
            for (m, x) in b.iter().enumerate().skip(i + 1) {
                sum -= self.lower[m * k + i].conj() * x;
            }
            b[i] = sum / self.lower[i * k + i];
        }
    }
}

/// Solve `(sum_j a_j a_j^H + sigma I) d = b` with `a_j = conj(xhat_j)`.
///
/// `xhat_rows` holds one row per training image (J x K). This is the
/// per-frequency normal-equation system of the dictionary-update stage.
pub fn solve_hermitian_system(
    xhat_rows: ArrayView2<'_, Complex64>,
    sigma: f64,
    b: &[Complex64],
) -> Vec<Complex64> {
    assert!(sigma > 0.0, "hermitian solve requires sigma > 0");
    let (j_count, k) = xhat_rows.dim();
    assert!(j_count >= 1, "need at least one row");
    assert_eq!(b.len(), k);
    // gram[p][q] = sum_j a_j[p] conj(a_j[q]) = sum_j conj(x_j[p]) x_j[q]
    let mut gram = vec![Complex64::ZERO; k * k];
    for j in 0..j_count {
        let row = xhat_rows.row(j);
        for p in 0..k {
            let cp = row[p].conj();
            for q in 0..k {
                gram[p * k + q] += cp * row[q];
            }
        }
    }
    let factor = HermitianFactor::new(&gram, k, sigma);
    let mut x = b.to_vec();
    factor.solve_into(&mut x);
    x
}
