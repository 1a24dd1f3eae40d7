//! Semantic point field: positions carrying one DINO descriptor and three
//! CLIP feature levels each, with a voxel index for neighbor queries.

mod gff;
mod index;

use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

pub use gff::{read_gff, write_gff, GffHeader, GFF_MAGIC};
pub use index::VoxelGrid;

/// Number of CLIP granularity levels per point.
pub const CLIP_LEVELS: usize = 3;

const ZERO_NORM: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("field has no points")]
    Empty,
    #[error("point {index}: {what} has dimension {got}, expected {want}")]
    DimMismatch { index: usize, what: &'static str, got: usize, want: usize },
    #[error("point {index}: {what} has near-zero norm")]
    ZeroFeature { index: usize, what: &'static str },
    #[error("point {0}: non-finite position")]
    NonFinite(usize),
    #[error("labels must be given for all points or none")]
    PartialLabels,
    #[error("feature file has {file} points, geometry has {given}")]
    CountMismatch { file: usize, given: usize },
    #[error("malformed feature file at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("unsupported feature file version {0:?}")]
    VersionMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Input record for [`SemanticPointField::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticPoint {
    pub position: [f32; 3],
    pub dino: Vec<f32>,
    pub clip: [Vec<f32>; CLIP_LEVELS],
    pub label: Option<u16>,
}

/// Immutable after construction; features are stored row-major per block.
#[derive(Debug, Clone)]
pub struct SemanticPointField {
    positions: Vec<[f32; 3]>,
    dino: Vec<f32>,
    clip: [Vec<f32>; CLIP_LEVELS],
    labels: Option<Vec<u16>>,
    d_dino: usize,
    d_clip: usize,
    index: VoxelGrid,
}

fn normalize_into(v: &[f32], out: &mut Vec<f32>) -> bool {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if !(norm >= ZERO_NORM) {
        return false;
    }
    out.extend(v.iter().map(|&x| (x as f64 / norm) as f32));
    true
}

impl SemanticPointField {
    /// Validates dimensions, renormalizes every feature row and indexes positions.
    pub fn build(points: Vec<SemanticPoint>) -> Result<Self, FieldError> {
        Self::build_with_cell(points, None)
    }

    pub fn build_with_cell(points: Vec<SemanticPoint>, cell: Option<f64>) -> Result<Self, FieldError> {
        let first = points.first().ok_or(FieldError::Empty)?;
        let d_dino = first.dino.len();
        let d_clip = first.clip[0].len();
        let n = points.len();
        let has_labels = first.label.is_some();
        let mut positions = Vec::with_capacity(n);
        let mut dino = Vec::with_capacity(n * d_dino);
        let mut clip: [Vec<f32>; CLIP_LEVELS] = std::array::from_fn(|_| Vec::with_capacity(n * d_clip));
        let mut labels = Vec::with_capacity(if has_labels { n } else { 0 });
        for (i, p) in points.iter().enumerate() {
            if p.position.iter().any(|v| !v.is_finite()) {
                return Err(FieldError::NonFinite(i));
            }
            if p.dino.len() != d_dino {
                return Err(FieldError::DimMismatch { index: i, what: "dino", got: p.dino.len(), want: d_dino });
            }
            if !normalize_into(&p.dino, &mut dino) {
                return Err(FieldError::ZeroFeature { index: i, what: "dino" });
            }
            for (level, block) in clip.iter_mut().enumerate() {
                let what = ["clip level 0", "clip level 1", "clip level 2"][level];
                if p.clip[level].len() != d_clip {
                    return Err(FieldError::DimMismatch { index: i, what, got: p.clip[level].len(), want: d_clip });
                }
                if !normalize_into(&p.clip[level], block) {
                    return Err(FieldError::ZeroFeature { index: i, what });
                }
            }
            match (has_labels, p.label) {
                (true, Some(l)) => labels.push(l),
                (false, None) => {}
                _ => return Err(FieldError::PartialLabels),
            }
            positions.push(p.position);
        }
        if d_dino == 0 || d_clip == 0 {
            return Err(FieldError::ZeroFeature { index: 0, what: if d_dino == 0 { "dino" } else { "clip" } });
        }
        Ok(Self::from_parts(positions, dino, clip, has_labels.then_some(labels), d_dino, d_clip, cell))
    }

    /// Trusted constructor for already-normalized blocks.
    pub(crate) fn from_parts(
        positions: Vec<[f32; 3]>,
        dino: Vec<f32>,
        clip: [Vec<f32>; CLIP_LEVELS],
        labels: Option<Vec<u16>>,
        d_dino: usize,
        d_clip: usize,
        cell: Option<f64>,
    ) -> Self {
        let pts: Vec<Vector3<f64>> = positions.iter().map(to_f64).collect();
        let cell = cell.unwrap_or_else(|| VoxelGrid::suggested_cell(&pts));
        let index = VoxelGrid::new(pts, cell);
        Self { positions, dino, clip, labels, d_dino, d_clip, index }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `(D_dino, D_clip)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.d_dino, self.d_clip)
    }

    pub fn position(&self, i: usize) -> &Vector3<f64> {
        self.index.position(i)
    }

    pub fn raw_position(&self, i: usize) -> [f32; 3] {
        self.positions[i]
    }

    pub fn dino(&self, i: usize) -> &[f32] {
        &self.dino[i * self.d_dino..(i + 1) * self.d_dino]
    }

    pub fn clip(&self, level: usize, i: usize) -> &[f32] {
        &self.clip[level][i * self.d_clip..(i + 1) * self.d_clip]
    }

    pub fn label(&self, i: usize) -> Option<u16> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn labels(&self) -> Option<&[u16]> {
        self.labels.as_deref()
    }

    pub fn index(&self) -> &VoxelGrid {
        &self.index
    }

    pub fn radius_neighbors(&self, center: &Vector3<f64>, r: f64) -> Vec<usize> {
        self.index.radius(center, r)
    }

    pub fn knn(&self, center: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        self.index.knn(center, k)
    }

    /// Median over points of the distance to their nearest other point.
    pub fn median_nn_distance(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        let mut d: Vec<f64> = (0..self.len())
            .map(|i| self.knn(self.position(i), 2).last().map(|&(_, d)| d).unwrap_or(0.0))
            .collect();
        d.sort_unstable_by(f64::total_cmp);
        let m = d.len() / 2;
        if d.len() % 2 == 1 {
            d[m]
        } else {
            0.5 * (d[m - 1] + d[m])
        }
    }

    /// Indices whose label equals `label`, ascending.
    pub fn points_with_label(&self, label: u16) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..l.len()).filter(|&i| l[i] == label).collect(),
            None => Vec::new(),
        }
    }

    pub fn to_points(&self) -> Vec<SemanticPoint> {
        (0..self.len())
            .map(|i| SemanticPoint {
                position: self.positions[i],
                dino: self.dino(i).to_vec(),
                clip: std::array::from_fn(|l| self.clip(l, i).to_vec()),
                label: self.label(i),
            })
            .collect()
    }

    pub(crate) fn blocks(&self) -> (&[[f32; 3]], &[f32], &[Vec<f32>; CLIP_LEVELS]) {
        (&self.positions, &self.dino, &self.clip)
    }

    /// Same features on new geometry. Row `i` of `positions` replaces point `i`.
    pub fn with_positions(&self, positions: Vec<[f32; 3]>) -> Result<Self, FieldError> {
        if positions.len() != self.len() {
            return Err(FieldError::CountMismatch { file: self.len(), given: positions.len() });
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(Self::from_parts(
            positions,
            self.dino.clone(),
            self.clip.clone(),
            self.labels.clone(),
            self.d_dino,
            self.d_clip,
            None,
        ))
    }
}

impl PartialEq for SemanticPointField {
    fn eq(&self, other: &Self) -> bool {
        self.positions == other.positions
            && self.dino == other.dino
            && self.clip == other.clip
            && self.labels == other.labels
            && self.dims() == other.dims()
    }
}

pub(crate) fn to_f64(p: &[f32; 3]) -> Vector3<f64> {
    Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64)
}

pub fn build_field(points: Vec<SemanticPoint>) -> Result<SemanticPointField, FieldError> {
    SemanticPointField::build(points)
}

pub fn save_field(field: &SemanticPointField, path: impl AsRef<Path>) -> Result<(), FieldError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_gff(field, &mut w)?;
    use std::io::Write;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<SemanticPointField, FieldError> {
    let bytes = std::fs::read(path)?;
    read_gff(&bytes)
}

/// Combines exporter features with externally supplied geometry (same row order).
pub fn attach_features(
    positions: &[Vector3<f64>],
    feature_file: impl AsRef<Path>,
) -> Result<SemanticPointField, FieldError> {
    let field = load_field(feature_file)?;
    if field.len() != positions.len() {
        return Err(FieldError::CountMismatch { file: field.len(), given: positions.len() });
    }
    field.with_positions(positions.iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect())
}
