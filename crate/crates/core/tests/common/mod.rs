//! Reference implementations used as test oracles. They favor obviousness
//! over speed and share no code with the library.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, RngExt};
use toao_core::Pose;

/// Random rigid transform: rotation from a normalized random quaternion
/// built by hand, translation in a 4 m cube.
pub fn random_pose<R: Rng + ?Sized>(rng: &mut R) -> Pose {
    let (w, x, y, z): (f64, f64, f64, f64) = loop {
        let q: (f64, f64, f64, f64) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = (q.0 * q.0 + q.1 * q.1 + q.2 * q.2 + q.3 * q.3).sqrt();
        if n > 0.1 {
            break (q.0 / n, q.1 / n, q.2 / n, q.3 / n);
        }
    };
    let r = Matrix3::new(
        1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w),
        2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w),
        2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y),
    );
    let t = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    Pose::new(r, t).expect("quaternion rotation is orthonormal")
}

/// Homogeneous 4x4 product, the plain way.
pub fn mat4(p: &Pose) -> [[f64; 4]; 4] {
    let (r, t) = (p.rotation(), p.translation());
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[(i, j)];
        }
        m[i][3] = t[i];
    }
    m[3][3] = 1.0;
    m
}

pub fn mat4_mul(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn mat4_diff(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            d = d.max((a[i][j] - b[i][j]).abs());
        }
    }
    d
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and the matching eigenvectors as columns of `v` (`v[row][col]`).
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Leading eigenvector of the (1/n) covariance of the rows.
pub fn principal_direction_oracle(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / n;
            }
        }
    }
    let (vals, vecs) = jacobi_eigen(cov);
    let best = (0..d).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (0..d).map(|i| vecs[i][best]).collect()
}

/// Layer-synchronous region growing by exhaustive search: every round,
/// recompute the mean feature of the accepted set and scan all points.
pub fn flood_fill_oracle(
    positions: &[Vector3<f64>],
    features: &[Vec<f64>],
    seeds: &[usize],
    restrict: &[usize],
    theta: f64,
    radius: f64,
) -> Vec<usize> {
    let n = positions.len();
    let mut accepted = vec![false; n];
    for &s in seeds {
        accepted[s] = true;
    }
    let allowed: Vec<bool> = (0..n).map(|i| restrict.contains(&i)).collect();
    loop {
        let d = features[0].len();
        let mut mean = vec![0.0; d];
        for i in (0..n).filter(|&i| accepted[i]) {
            for k in 0..d {
                mean[k] += features[i][k];
            }
        }
        let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        mean.iter_mut().for_each(|x| *x /= norm);
        let layer: Vec<usize> = (0..n)
            .filter(|&j| allowed[j] && !accepted[j])
            .filter(|&j| (0..n).any(|i| accepted[i] && (positions[i] - positions[j]).norm() <= radius))
            .filter(|&j| features[j].iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>() >= theta)
            .collect();
        if layer.is_empty() {
            break;
        }
        for j in layer {
            accepted[j] = true;
        }
    }
    (0..n).filter(|&i| accepted[i]).collect()
}

pub fn set_iou(a: &[usize], b: &[usize]) -> f64 {
    let a: std::collections::BTreeSet<_> = a.iter().collect();
    let b: std::collections::BTreeSet<_> = b.iter().collect();
    a.intersection(&b).count() as f64 / a.union(&b).count() as f64
}
