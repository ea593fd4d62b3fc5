//! Independent oracles for solver verification.
//!
//! Everything here deliberately avoids the crate's FFT/ADMM code paths:
//! convolutions are nested loops, linear systems go through a pivoted LU,
//! and the reference optimizers are plain (proximal/projected) gradient
//! descent. Agreement between these and the production solvers is the
//! evidence the test suites assert.

// Each test binary uses its own subset of the oracles.
#![allow(dead_code)]

use aircsc::rng::SplitMix64;
use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use num_complex::Complex64;

/// Solve `A x = b` for a dense complex system by LU with partial pivoting.
/// `a` is row-major `n x n` and is consumed.
pub fn dense_solve(mut a: Vec<Complex64>, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[row * n + col].norm() > a[pivot * n + col].norm() {
                pivot = row;
            }
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        assert!(diag.norm() > 0.0, "singular system");
        for row in (col + 1)..n {
            let factor = a[row * n + col] / diag;
            for c in col..n {
                let v = a[col * n + c];
                a[row * n + c] -= factor * v;
            }
            let bc = b[col];
            b[row] -= factor * bc;
        }
    }
    for row in (0..n).rev() {
        let mut sum = b[row];
        for c in (row + 1)..n {
            sum -= a[row * n + c] * b[c];
        }
        b[row] = sum / a[row * n + row];
    }
    b
}

/// Periodic (circular) convolution by direct spatial loops, atom anchored at
/// (0, 0): `out[r, c] = sum_{i,j} atom[i, j] * map[(r-i) mod h, (c-j) mod w]`.
/// The column wrap is split into two contiguous runs so the inner loop stays
/// branch-free.
pub fn naive_conv(atom: ArrayView2<'_, f64>, map: ArrayView2<'_, f64>) -> Array2<f64> {
    let (h, w) = map.dim();
    let mut out = Array2::zeros((h, w));
    naive_conv_accum(atom, map, &mut out);
    out
}

pub fn naive_conv_accum(atom: ArrayView2<'_, f64>, map: ArrayView2<'_, f64>, out: &mut Array2<f64>) {
    let (h, w) = map.dim();
    let (ah, aw) = atom.dim();
    let owned;
    let map_flat = match map.as_slice() {
        Some(s) => s,
        None => {
            owned = map.to_owned();
            owned.as_slice().expect("owned layout")
        }
    };
    let out_flat = out.as_slice_mut().expect("layout");
    for r in 0..h {
        let out_row = &mut out_flat[r * w..(r + 1) * w];
        for i in 0..ah {
            let rr = if r >= i { r - i } else { r + h - i };
            let map_row = &map_flat[rr * w..(rr + 1) * w];
            for j in 0..aw {
                let a = atom[[i, j]];
                for c in j..w {
                    out_row[c] += a * map_row[c - j];
                }
                for c in 0..j {
                    out_row[c] += a * map_row[c + w - j];
                }
            }
        }
    }
}

/// `sum_k atom_k (*) map_k` by naive convolution.
pub fn naive_reconstruct(atoms: ArrayView3<'_, f64>, maps: ArrayView3<'_, f64>) -> Array2<f64> {
    let (_, h, w) = maps.dim();
    let mut out = Array2::zeros((h, w));
    for (atom, map) in atoms.outer_iter().zip(maps.outer_iter()) {
        naive_conv_accum(atom, map, &mut out);
    }
    out
}

/// Periodic correlation of `field` with `atom` (the adjoint of `naive_conv`
/// in its map argument), full output size:
/// `out[p, q] = sum_{i,j} atom[i, j] * field[(p+i) mod h, (q+j) mod w]`.
pub fn naive_correlate(atom: ArrayView2<'_, f64>, field: ArrayView2<'_, f64>) -> Array2<f64> {
    let (h, w) = field.dim();
    let (ah, aw) = atom.dim();
    let owned;
    let field_flat = match field.as_slice() {
        Some(s) => s,
        None => {
            owned = field.to_owned();
            owned.as_slice().expect("owned layout")
        }
    };
    let mut out = Array2::zeros((h, w));
    let out_flat = out.as_slice_mut().expect("layout");
    for p in 0..h {
        let out_row = &mut out_flat[p * w..(p + 1) * w];
        for i in 0..ah {
            let rr = (p + i) % h;
            let field_row = &field_flat[rr * w..(rr + 1) * w];
            for j in 0..aw {
                let a = atom[[i, j]];
                for q in 0..(w - j) {
                    out_row[q] += a * field_row[q + j];
                }
                for q in (w - j)..w {
                    out_row[q] += a * field_row[q + j - w];
                }
            }
        }
    }
    out
}

/// The coding objective evaluated with naive convolutions only.
pub fn naive_functional(
    atoms: ArrayView3<'_, f64>,
    maps: ArrayView3<'_, f64>,
    image: ArrayView2<'_, f64>,
    lambda: f64,
) -> f64 {
    let recon = naive_reconstruct(atoms, maps);
    let data: f64 = recon
        .iter()
        .zip(image.iter())
        .map(|(r, s)| (r - s) * (r - s))
        .sum::<f64>()
        * 0.5;
    data + lambda * maps.iter().map(|v| v.abs()).sum::<f64>()
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Lipschitz constant of the coding quadratic (largest eigenvalue of D^T D)
/// by power iteration with naive convolutions.
pub fn power_lipschitz(atoms: ArrayView3<'_, f64>, h: usize, w: usize, iters: usize) -> f64 {
    let k = atoms.dim().0;
    let mut rng = SplitMix64::new(0x9E37);
    let mut v = Array3::from_shape_simple_fn((k, h, w), || rng.next_f64() - 0.5);
    let mut eig = 1.0;
    for _ in 0..iters {
        let field = naive_reconstruct(atoms, v.view());
        let mut next = Array3::zeros((k, h, w));
        for (kk, atom) in atoms.outer_iter().enumerate() {
            next.index_axis_mut(ndarray::Axis(0), kk)
                .assign(&naive_correlate(atom, field.view()));
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 0.0);
        eig = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        next.mapv_inplace(|x| x / norm);
        v = next;
    }
    eig
}

/// Long-run ISTA on the coding objective; returns (maps, final functional).
pub fn ista_solve(
    atoms: ArrayView3<'_, f64>,
    image: ArrayView2<'_, f64>,
    lambda: f64,
    iters: usize,
) -> (Array3<f64>, f64) {
    let (k, ah, aw) = atoms.dim();
    let _ = (ah, aw);
    let (h, w) = image.dim();
    // Small safety factor on the power-iteration estimate keeps the step valid.
    let lip = power_lipschitz(atoms, h, w, 50) * 1.01;
    let step = 1.0 / lip;
    let mut x = Array3::<f64>::zeros((k, h, w));
    for _ in 0..iters {
        let recon = naive_reconstruct(atoms, x.view());
        let residual = &recon - &image;
        for (kk, atom) in atoms.outer_iter().enumerate() {
            let grad = naive_correlate(atom, residual.view());
            let mut plane = x.index_axis_mut(ndarray::Axis(0), kk);
            ndarray::Zip::from(&mut plane).and(&grad).for_each(|xv, &g| {
                *xv = soft(*xv - step * g, lambda * step);
            });
        }
    }
    let f = naive_functional(atoms, x.view(), image, lambda);
    (x, f)
}

/// Data-fit term of the dictionary problem, naive convolutions.
pub fn naive_data_fit(
    atoms: ArrayView3<'_, f64>,
    maps: &[Array3<f64>],
    images: &[Array2<f64>],
) -> f64 {
    maps.iter()
        .zip(images)
        .map(|(m, s)| {
            let recon = naive_reconstruct(atoms, m.view());
            recon
                .iter()
                .zip(s.iter())
                .map(|(r, v)| (r - v) * (r - v))
                .sum::<f64>()
                * 0.5
        })
        .sum()
}

/// Projected gradient descent on the constrained dictionary fit: steepest
/// descent on the data term, then crop-to-support and renormalize.
pub fn projected_gradient_dict_fit(
    maps: &[Array3<f64>],
    images: &[Array2<f64>],
    init: ArrayView3<'_, f64>,
    iters: usize,
) -> (Array3<f64>, f64) {
    let (k, ah, aw) = init.dim();
    let (h, w) = images[0].dim();
    // Lipschitz bound for the dictionary quadratic via power iteration on
    // the map operator (dict -> residual -> gradient).
    let mut rng = SplitMix64::new(0xABCD);
    let mut probe = Array3::from_shape_simple_fn((k, ah, aw), || rng.next_f64() - 0.5);
    let mut lip = 1.0;
    for _ in 0..40 {
        let mut grad = Array3::<f64>::zeros((k, ah, aw));
        for (m, _s) in maps.iter().zip(images) {
            let recon = naive_reconstruct(probe.view(), m.view());
            for kk in 0..k {
                let corr = naive_correlate(
                    m.index_axis(ndarray::Axis(0), kk).slice(ndarray::s![..h, ..w]),
                    recon.view(),
                );
                // gradient restricted to the support window
                let mut gslice = grad.index_axis_mut(ndarray::Axis(0), kk);
                for i in 0..ah {
                    for j in 0..aw {
                        gslice[[i, j]] += corr[[i, j]];
                    }
                }
            }
        }
        let norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lip = norm / probe.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        grad.mapv_inplace(|x| x / norm);
        probe = grad;
    }
    let step = 1.0 / (lip * 1.01);

    let mut dict = init.to_owned();
    for _ in 0..iters {
        let mut grad = Array3::<f64>::zeros((k, ah, aw));
        for (m, s) in maps.iter().zip(images) {
            let recon = naive_reconstruct(dict.view(), m.view());
            let residual = &recon - s;
            for kk in 0..k {
                let corr = naive_correlate(
                    m.index_axis(ndarray::Axis(0), kk),
                    residual.view(),
                );
                let mut gslice = grad.index_axis_mut(ndarray::Axis(0), kk);
                for i in 0..ah {
                    for j in 0..aw {
                        gslice[[i, j]] += corr[[i, j]];
                    }
                }
            }
        }
        for kk in 0..k {
            let mut atom = dict.index_axis_mut(ndarray::Axis(0), kk);
            let g = grad.index_axis(ndarray::Axis(0), kk);
            ndarray::Zip::from(&mut atom).and(&g).for_each(|a, &gd| *a -= step * gd);
            let norm = atom.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                atom.mapv_inplace(|x| x / norm);
            }
        }
    }
    let fit = naive_data_fit(dict.view(), maps, images);
    (dict, fit)
}

/// Direct dense solve of the Tikhonov normal equations
/// `(I + lambda (G_r^T G_r + G_c^T G_c)) l = s` with periodic forward
/// differences, treating the image as a stacked vector.
pub fn dense_tikhonov_lowpass(image: ArrayView2<'_, f64>, lambda: f64) -> Array2<f64> {
    let (h, w) = image.dim();
    let n = h * w;
    let idx = |r: usize, c: usize| r * w + c;
    // Build lambda * (Gr^T Gr + Gc^T Gc) + I as a real matrix.
    let mut a = vec![0.0f64; n * n];
    for r in 0..h {
        for c in 0..w {
            // Row-direction difference: l[r+1, c] - l[r, c]
            let from = idx(r, c);
            let to = idx((r + 1) % h, c);
            a[from * n + from] += lambda;
            a[to * n + to] += lambda;
            a[from * n + to] -= lambda;
            a[to * n + from] -= lambda;
            // Column-direction difference: l[r, c+1] - l[r, c]
            let to = idx(r, (c + 1) % w);
            a[from * n + from] += lambda;
            a[to * n + to] += lambda;
            a[from * n + to] -= lambda;
            a[to * n + from] -= lambda;
        }
    }
    for d in 0..n {
        a[d * n + d] += 1.0;
    }
    let ac: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let bc: Vec<Complex64> = image.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let sol = dense_solve(ac, bc);
    Array2::from_shape_vec((h, w), sol.iter().map(|z| z.re).collect()).unwrap()
}

pub fn random_complex_vec(rng: &mut SplitMix64, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.next_normal(), rng.next_normal()))
        .collect()
}

pub fn random_image(rng: &mut SplitMix64, h: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((h, w), || rng.next_f64() - 0.5)
}

/// Random unit-norm zero-mean atoms, generated without the crate's
/// dictionary initializer.
pub fn random_atoms(rng: &mut SplitMix64, k: usize, size: usize) -> Array3<f64> {
    let mut atoms = Array3::zeros((k, size, size));
    for kk in 0..k {
        let mut atom = Array2::from_shape_simple_fn((size, size), || rng.next_normal());
        let mean = atom.sum() / (size * size) as f64;
        atom.mapv_inplace(|v| v - mean);
        let norm = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
        atom.mapv_inplace(|v| v / norm);
        atoms.index_axis_mut(ndarray::Axis(0), kk).assign(&atom);
    }
    atoms
}

/// Max absolute normalized cross-correlation between two atoms over all
/// circular shifts of a common padded domain (flips excluded).
pub fn shift_max_normalized_xcorr(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    pad: usize,
) -> f64 {
    let pa = {
        let mut p = Array2::zeros((pad, pad));
        p.slice_mut(ndarray::s![..a.nrows(), ..a.ncols()]).assign(&a);
        p
    };
    let pb = {
        let mut p = Array2::zeros((pad, pad));
        p.slice_mut(ndarray::s![..b.nrows(), ..b.ncols()]).assign(&b);
        p
    };
    let na = pa.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = pb.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut best = 0.0f64;
    for dr in 0..pad {
        for dc in 0..pad {
            let mut dot = 0.0;
            for i in 0..pad {
                for j in 0..pad {
                    dot += pa[[(i + dr) % pad, (j + dc) % pad]] * pb[[i, j]];
                }
            }
            best = best.max((dot / (na * nb)).abs());
        }
    }
    best
}
