use nalgebra::{DMatrix, DVector};

use super::ExtractionError;
use crate::field::SemanticPointField;

const OTSU_BINS: usize = 256;

/// Dominant axis of a mean-centered feature matrix.
#[derive(Debug, Clone)]
pub struct PrincipalAxis {
    pub direction: DVector<f64>,
    pub mean: DVector<f64>,
    /// Largest and second-largest covariance eigenvalues.
    pub eigenvalues: (f64, f64),
}

impl PrincipalAxis {
    pub fn project(&self, row: &[f32]) -> f64 {
        row.iter()
            .zip(self.direction.iter().zip(self.mean.iter()))
            .map(|(&x, (&d, &m))| (x as f64 - m) * d)
            .sum()
    }
}

/// First principal component of `n` rows of width `d` (row-major).
pub fn first_principal_component(rows: &[f32], d: usize) -> Result<PrincipalAxis, ExtractionError> {
    assert!(d > 0 && rows.len().is_multiple_of(d), "rows must be n×d");
    let n = rows.len() / d;
    if n == 0 {
        return Err(ExtractionError::EmptyField);
    }
    let x = DMatrix::from_row_slice(n, d, rows).map(|v| v as f64);
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = (centered.transpose() * &centered) / n as f64;
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[order[0]];
    let l2 = if d > 1 { eig.eigenvalues[order[1]] } else { 0.0 };
    // unit-norm rows bound the spectrum by 1; below 1e-12 there is no signal
    if l1 <= 1e-12 || (l1 - l2) <= 1e-9 * l1.abs() {
        return Err(ExtractionError::DegenerateFeatures { l1, l2 });
    }
    let direction = eig.eigenvectors.column(order[0]).into_owned();
    Ok(PrincipalAxis { direction, mean, eigenvalues: (l1, l2) })
}

/// Otsu split of 1-D values over a fixed-width histogram.
///
/// Returns the last bin index of the low class; a value belongs to the high
/// class iff its bin index is greater.
pub fn otsu_split(values: &[f64], bins: usize) -> (usize, impl Fn(f64) -> usize) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let bin_of = move |v: f64| -> usize {
        if !(width > 0.0) {
            return 0;
        }
        (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1)
    };
    let mut hist = vec![0u64; bins];
    for &v in values {
        hist[bin_of(v)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &h)| i as f64 * h as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut split) = (-1.0, 0);
    for (t, &h) in hist.iter().enumerate().take(bins - 1) {
        w0 += h as f64;
        sum0 += t as f64 * h as f64;
        let w1 = total - w0;
        if w0 == 0.0 {
            continue;
        }
        if w1 == 0.0 {
            break;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            split = t;
        }
    }
    (split, bin_of)
}

#[derive(Debug, Clone)]
pub struct Foreground {
    /// Ascending point indices.
    pub indices: Vec<usize>,
    pub axis: PrincipalAxis,
    /// Projection of every point on the oriented axis.
    pub projections: Vec<f64>,
}

/// Foreground points by thresholding the first principal component of the
/// DINO features; the axis is oriented so the seed projects non-negatively.
pub fn dino_foreground(field: &SemanticPointField, seed: usize) -> Result<Foreground, ExtractionError> {
    if field.is_empty() {
        return Err(ExtractionError::EmptyField);
    }
    if seed >= field.len() {
        return Err(ExtractionError::BadIndex(seed));
    }
    let d = field.dims().0;
    let rows: Vec<f32> = (0..field.len()).flat_map(|i| field.dino(i).iter().copied()).collect();
    let mut axis = first_principal_component(&rows, d)?;
    if axis.project(field.dino(seed)) < 0.0 {
        axis.direction.neg_mut();
    }
    let projections: Vec<f64> = (0..field.len()).map(|i| axis.project(field.dino(i))).collect();
    let (split, bin_of) = otsu_split(&projections, OTSU_BINS);
    let indices = (0..field.len())
        .filter(|&i| i == seed || bin_of(projections[i]) > split)
        .collect();
    Ok(Foreground { indices, axis, projections })
}
