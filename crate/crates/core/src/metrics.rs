//! Evaluation metrics: Dice overlap, map sparsity, reconstruction PSNR.

use ndarray::ArrayViewD;

use crate::csc::CoefficientMaps;
use crate::error::{Error, Result};

/// Dice overlap of a (possibly soft) prediction against a binary ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiceResult {
    pub dice: f64,
    /// Always exactly `1 - dice`.
    pub loss: f64,
    pub intersection_weight: f64,
    pub pred_weight: f64,
    pub gt_weight: f64,
}

/// `dice = 2*sum(p_i*g_i) / (sum(p_i) + sum(g_i))` over voxels.
///
/// `pred` may hold probabilities in [0, 1]; `gt` must be exactly binary.
/// When both sums are zero the ratio is undefined and an error is returned
/// unless `smooth` is set, which adds 1e-7 to numerator and denominator
/// (the common training-time convention, yielding 1.0 for empty-vs-empty).
pub fn dice(pred: ArrayViewD<'_, f64>, gt: ArrayViewD<'_, f64>, smooth: bool) -> Result<DiceResult> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(format!(
            "pred shape {:?} != gt shape {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    if let Some(bad) = pred.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidData(format!(
            "prediction values must lie in [0, 1], found {bad}"
        )));
    }
    if let Some(bad) = gt.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidData(format!(
            "ground truth must be exactly binary, found {bad}"
        )));
    }
    let mut intersection = 0.0;
    let mut pred_weight = 0.0;
    let mut gt_weight = 0.0;
    for (p, g) in pred.iter().zip(gt.iter()) {
        intersection += p * g;
        pred_weight += p;
        gt_weight += g;
    }
    let denom = pred_weight + gt_weight;
    let dice = if smooth {
        (2.0 * intersection + 1e-7) / (denom + 1e-7)
    } else {
        if denom == 0.0 {
            return Err(Error::UndefinedDice);
        }
        2.0 * intersection / denom
    };
    Ok(DiceResult {
        dice,
        loss: 1.0 - dice,
        intersection_weight: intersection,
        pred_weight,
        gt_weight,
    })
}

/// Exact sparsity statistics of a coefficient-map stack.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityStats {
    /// Fraction of entries that are literally zero.
    pub zero_fraction: f64,
    pub l1_norm: f64,
    pub max_abs: f64,
    pub per_atom_l1: Vec<f64>,
}

pub fn sparsity_stats(maps: &CoefficientMaps) -> SparsityStats {
    let data = maps.maps();
    let (k, _, _) = data.dim();
    let mut per_atom_l1 = vec![0.0; k];
    let mut zeros = 0usize;
    let mut max_abs = 0.0f64;
    for (atom, plane) in data.outer_iter().enumerate() {
        for &v in plane.iter() {
            if v == 0.0 {
                zeros += 1;
            }
            let a = v.abs();
            per_atom_l1[atom] += a;
            max_abs = max_abs.max(a);
        }
    }
    SparsityStats {
        zero_fraction: zeros as f64 / data.len() as f64,
        l1_norm: per_atom_l1.iter().sum(),
        max_abs,
        per_atom_l1,
    }
}

/// `10*log10(peak^2 / MSE)` in dB; identical arrays return the infinity
/// sentinel rather than a finite cap.
pub fn psnr(reference: ArrayViewD<'_, f64>, candidate: ArrayViewD<'_, f64>, peak: f64) -> Result<f64> {
    if reference.shape() != candidate.shape() {
        return Err(Error::ShapeMismatch(format!(
            "reference shape {:?} != candidate shape {:?}",
            reference.shape(),
            candidate.shape()
        )));
    }
    if peak <= 0.0 || !peak.is_finite() {
        return Err(Error::InvalidArgument(format!("peak must be > 0, got {peak}")));
    }
    let n = reference.len() as f64;
    let mse: f64 = reference
        .iter()
        .zip(candidate.iter())
        .map(|(r, c)| (r - c) * (r - c))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}
