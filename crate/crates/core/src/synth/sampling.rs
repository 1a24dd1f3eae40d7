//! Near-uniform surface sampling of primitives with exact point counts.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

/// Relative jitter of grid samples inside their cell.
const JITTER: f64 = 0.15;

/// Primitive in its local frame: spheres and boxes are centered on the
/// origin, cylinders run along local z and are centered too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    Sphere { radius: f64 },
    Cylinder { radius: f64, length: f64 },
    Box { size: [f64; 3] },
}

impl Primitive {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match self {
            Primitive::Sphere { radius } => *radius > 0.0,
            Primitive::Cylinder { radius, length } => *radius > 0.0 && *length > 0.0,
            Primitive::Box { size } => size.iter().all(|&s| s > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("non-positive dimension in {self:?}"))
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Primitive::Sphere { radius } => 4.0 * PI * radius * radius,
            Primitive::Cylinder { radius, length } => 2.0 * PI * radius * (length + radius),
            Primitive::Box { size: [a, b, c] } => 2.0 * (a * b + b * c + a * c),
        }
    }

    /// Exactly `n` surface points.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vector3<f64>> {
        match *self {
            Primitive::Sphere { radius } => fibonacci_sphere(n, radius),
            Primitive::Cylinder { radius, length } => {
                let lateral = 2.0 * PI * radius * length;
                let cap = PI * radius * radius;
                let counts = allocate(n, &[lateral, cap, cap]);
                let mut out = Vec::with_capacity(n);
                for (s, t) in grid(counts[0], 2.0 * PI * radius, length, rng) {
                    let theta = s / radius;
                    out.push(Vector3::new(radius * theta.cos(), radius * theta.sin(), t - 0.5 * length));
                }
                for (k, z) in [(1, 0.5 * length), (2, -0.5 * length)] {
                    out.extend(disc(counts[k], radius).into_iter().map(|(x, y)| Vector3::new(x, y, z)));
                }
                out
            }
            Primitive::Box { size: [a, b, c] } => {
                // faces: ±z (a×b), ±y (a×c), ±x (b×c)
                let counts = allocate(n, &[a * b, a * b, a * c, a * c, b * c, b * c]);
                let mut out = Vec::with_capacity(n);
                for (face, &count) in counts.iter().enumerate() {
                    let sign = if face % 2 == 0 { 0.5 } else { -0.5 };
                    let (w, h) = match face / 2 {
                        0 => (a, b),
                        1 => (a, c),
                        _ => (b, c),
                    };
                    for (s, t) in grid(count, w, h, rng) {
                        let (s, t) = (s - 0.5 * w, t - 0.5 * h);
                        out.push(match face / 2 {
                            0 => Vector3::new(s, t, sign * c),
                            1 => Vector3::new(s, sign * b, t),
                            _ => Vector3::new(sign * a, s, t),
                        });
                    }
                }
                out
            }
        }
    }
}

/// Largest-remainder split of `n` proportional to `weights` (ties to the lower index).
pub(crate) fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| (exact[j] - exact[j].floor()).total_cmp(&(exact[i] - exact[i].floor())).then(i.cmp(&j)));
    for i in order {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// `n` jittered grid points over a `w × h` rectangle with near-square cells.
fn grid<R: Rng + ?Sized>(n: usize, w: f64, h: f64, rng: &mut R) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let nx = ((n as f64 * w / h).sqrt().round() as usize).clamp(1, n);
    let ny = n.div_ceil(nx);
    let cells = nx * ny;
    let (cw, ch) = (w / nx as f64, h / ny as f64);
    (0..n)
        .map(|k| {
            // spread the dropped cells evenly
            let cell = k * cells / n;
            let (i, j) = (cell % nx, cell / nx);
            let ju = rng.random_range(-JITTER..=JITTER);
            let jv = rng.random_range(-JITTER..=JITTER);
            ((i as f64 + 0.5 + ju) * cw, (j as f64 + 0.5 + jv) * ch)
        })
        .collect()
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

fn fibonacci_sphere(n: usize, r: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = i as f64 * GOLDEN_ANGLE;
            Vector3::new(r * rho * phi.cos(), r * rho * phi.sin(), r * z)
        })
        .collect()
}

/// Vogel spiral: area-uniform points on a disc.
fn disc(n: usize, r: f64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let rad = r * ((i as f64 + 0.5) / n as f64).sqrt();
            let phi = i as f64 * GOLDEN_ANGLE;
            (rad * phi.cos(), rad * phi.sin())
        })
        .collect()
}
