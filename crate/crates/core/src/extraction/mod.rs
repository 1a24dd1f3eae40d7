//! Conditional object extraction and part querying.
//!
//! The pipeline runs a coarse language query to find a seed point, splits
//! foreground from background along the first principal component of the
//! DINO features, grows an object mask by DINO-gated flood fill, and finally
//! runs the fine-level part query restricted to that mask.

mod flood;
mod pca;
mod relevancy;

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{SemanticPointField, CLIP_LEVELS};
use crate::geometry::Pose;

pub use flood::{flood_fill, GrowthParams};
pub use pca::{dino_foreground, first_principal_component, otsu_split, Foreground, PrincipalAxis};
pub use relevancy::{relevancy, score, RelevancyMode};

/// Coarse relevancy below this means the object query matched nothing.
pub const MIN_COARSE_RELEVANCY: f64 = 0.05;

pub const DEFAULT_CANONICAL_PHRASES: [&str; 4] = ["object", "things", "stuff", "texture"];

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("field is empty")]
    EmptyField,
    #[error("no point is relevant to the query (max relevancy {0:.4})")]
    NoRelevantPoints(f64),
    #[error("DINO features have no dominant direction (eigenvalues {l1:e}, {l2:e})")]
    DegenerateFeatures { l1: f64, l2: f64 },
    #[error("CLIP level {0} out of range")]
    BadLevel(usize),
    #[error("point index {0} out of range")]
    BadIndex(usize),
    #[error("query has dimension {got}, field has {want}")]
    QueryDim { got: usize, want: usize },
    #[error("text embedding for {0:?} has zero norm")]
    ZeroEmbedding(String),
    #[error("canonical-ratio mode needs at least one canonical embedding")]
    MissingCanonical,
    #[error("flood fill needs at least one seed")]
    NoSeeds,
    #[error("seed {0} lies outside the restrict set")]
    SeedOutsideRestrict(usize),
    #[error("invalid extraction config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("result file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Unit-norm text feature in CLIP space.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    text: String,
    vector: Vec<f32>,
}

impl TextEmbedding {
    pub fn new(text: impl Into<String>, vector: Vec<f32>) -> Result<Self, ExtractionError> {
        let text = text.into();
        let norm = vector.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        if !(norm > 1e-8) {
            return Err(ExtractionError::ZeroEmbedding(text));
        }
        let vector = vector.iter().map(|&x| (x as f64 / norm) as f32).collect();
        Ok(Self { text, vector })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn vector(&self) -> &[f32] {
        &self.vector
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub theta_dino: f64,
    /// `None` means twice the median nearest-neighbor spacing of the field.
    pub growth_radius: Option<f64>,
    pub relevancy_mode: RelevancyMode,
    /// Phrases resolved into `canonical_embeddings` by the caller.
    pub canonical_phrases: Vec<String>,
    #[serde(skip)]
    pub canonical_embeddings: Vec<TextEmbedding>,
    /// Percentile of foreground coarse relevancy that selects flood-fill seeds.
    pub seed_percentile: f64,
    /// Percentile of in-mask fine relevancy that selects the part points.
    pub fine_percentile: f64,
    pub coarse_level: usize,
    pub fine_level: usize,
    /// Keep flood fill inside the PCA foreground.
    pub strict_foreground: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            theta_dino: 0.85,
            growth_radius: None,
            relevancy_mode: RelevancyMode::Cosine,
            canonical_phrases: DEFAULT_CANONICAL_PHRASES.iter().map(|s| s.to_string()).collect(),
            canonical_embeddings: Vec::new(),
            seed_percentile: 90.0,
            fine_percentile: 90.0,
            coarse_level: 0,
            fine_level: 2,
            strict_foreground: false,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<(), ExtractionError> {
        let bad = |m: String| Err(ExtractionError::InvalidConfig(m));
        if !(self.theta_dino > 0.0 && self.theta_dino <= 1.0) {
            return bad(format!("theta_dino {} outside (0, 1]", self.theta_dino));
        }
        if let Some(r) = self.growth_radius {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("growth_radius {r} must be positive"));
            }
        }
        for (name, p) in [("fine_percentile", self.fine_percentile), ("seed_percentile", self.seed_percentile)] {
            if !(p > 0.0 && p < 100.0) {
                return bad(format!("{name} {p} outside (0, 100)"));
            }
        }
        for level in [self.coarse_level, self.fine_level] {
            if level >= CLIP_LEVELS {
                return Err(ExtractionError::BadLevel(level));
            }
        }
        Ok(())
    }
}

/// Linear-interpolation percentile (`p` in `[0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty set");
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Lowest index among the maxima.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    pub foreground: Vec<usize>,
    pub object_mask: Vec<usize>,
    pub toao: Vec<usize>,
    /// Fine-level part relevancy, zero outside the object mask.
    pub relevancy: Vec<f64>,
    /// Object-attached (end-effector) frame.
    pub toao_centroid: Vector3<f64>,
    pub seed: usize,
    pub flood_seeds: Vec<usize>,
    pub growth_radius: f64,
}

fn centroid(field: &SemanticPointField, idx: &[usize]) -> Vector3<f64> {
    let sum = idx.iter().fold(Vector3::zeros(), |acc, &i| acc + field.position(i));
    sum / idx.len().max(1) as f64
}

pub fn default_growth_radius(field: &SemanticPointField) -> f64 {
    2.0 * field.median_nn_distance()
}

/// Two-stage extraction: object mask first, then the part inside it.
pub fn extract(
    field: &SemanticPointField,
    object_query: &TextEmbedding,
    part_query: &TextEmbedding,
    cfg: &ExtractionConfig,
) -> Result<ExtractionResult, ExtractionError> {
    cfg.validate()?;
    if field.is_empty() {
        return Err(ExtractionError::EmptyField);
    }
    let coarse = relevancy(field, object_query, cfg.coarse_level, cfg)?;
    let seed = argmax(&coarse).ok_or(ExtractionError::EmptyField)?;
    if coarse[seed] < MIN_COARSE_RELEVANCY {
        return Err(ExtractionError::NoRelevantPoints(coarse[seed]));
    }

    let fg = dino_foreground(field, seed)?;
    let fg_scores: Vec<f64> = fg.indices.iter().map(|&i| coarse[i]).collect();
    let seed_cut = percentile(&fg_scores, cfg.seed_percentile);
    let flood_seeds: Vec<usize> = fg.indices.iter().copied().filter(|&i| coarse[i] >= seed_cut).collect();

    let growth_radius = match cfg.growth_radius {
        Some(r) => r,
        None => default_growth_radius(field),
    };
    if !(growth_radius > 0.0) {
        return Err(ExtractionError::InvalidConfig("field has zero point spacing; set growth_radius".into()));
    }
    let restrict: Vec<usize> = if cfg.strict_foreground { fg.indices.clone() } else { (0..field.len()).collect() };
    let params = GrowthParams { theta_dino: cfg.theta_dino, radius: growth_radius };
    let object_mask = flood_fill(field, &flood_seeds, params, &restrict)?;

    let fine = relevancy(field, part_query, cfg.fine_level, cfg)?;
    let mut masked = vec![0.0; field.len()];
    for &i in &object_mask {
        masked[i] = fine[i];
    }
    let in_mask: Vec<f64> = object_mask.iter().map(|&i| fine[i]).collect();
    let cut = percentile(&in_mask, cfg.fine_percentile);
    let toao: Vec<usize> = object_mask.iter().copied().filter(|&i| fine[i] >= cut).collect();
    let toao_centroid = centroid(field, &toao);

    Ok(ExtractionResult {
        foreground: fg.indices,
        object_mask,
        toao,
        relevancy: masked,
        toao_centroid,
        seed,
        flood_seeds,
        growth_radius,
    })
}

/// Baseline without object conditioning: fine-level query over the whole
/// field, thresholded at `fine_percentile`.
pub fn single_stage(
    field: &SemanticPointField,
    part_query: &TextEmbedding,
    cfg: &ExtractionConfig,
) -> Result<ExtractionResult, ExtractionError> {
    cfg.validate()?;
    if field.is_empty() {
        return Err(ExtractionError::EmptyField);
    }
    let fine = relevancy(field, part_query, cfg.fine_level, cfg)?;
    let cut = percentile(&fine, cfg.fine_percentile);
    let toao: Vec<usize> = (0..field.len()).filter(|&i| fine[i] >= cut).collect();
    let all: Vec<usize> = (0..field.len()).collect();
    Ok(ExtractionResult {
        toao_centroid: centroid(field, &toao),
        seed: argmax(&fine).unwrap_or(0),
        foreground: all.clone(),
        flood_seeds: Vec::new(),
        object_mask: all,
        toao,
        relevancy: fine,
        growth_radius: 0.0,
    })
}

/// On-disk form of an [`ExtractionResult`]; relevancy lives in a raw
/// little-endian f32 sidecar next to the JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub foreground: Vec<usize>,
    pub object_mask: Vec<usize>,
    pub toao: Vec<usize>,
    pub toao_centroid: [f64; 3],
    pub relevancy_path: String,
    #[serde(default)]
    pub method: String,
    #[serde(default)]
    pub object_query: String,
    #[serde(default)]
    pub part_query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toao_pose: Option<Pose>,
}

impl ResultFile {
    pub fn from_result(r: &ExtractionResult, relevancy_path: impl Into<String>) -> Self {
        let c = r.toao_centroid;
        Self {
            foreground: r.foreground.clone(),
            object_mask: r.object_mask.clone(),
            toao: r.toao.clone(),
            toao_centroid: [c.x, c.y, c.z],
            relevancy_path: relevancy_path.into(),
            method: String::new(),
            object_query: String::new(),
            part_query: String::new(),
            toao_pose: None,
        }
    }
}

pub fn write_f32_file(path: impl AsRef<Path>, values: impl IntoIterator<Item = f32>) -> std::io::Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(f32::to_le_bytes).collect();
    std::fs::write(path, bytes)
}

pub fn read_f32_file(path: impl AsRef<Path>) -> std::io::Result<Vec<f32>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "length is not a multiple of 4"));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

/// Writes `<json_path>` and its relevancy sidecar (`<stem>.relevancy.f32`).
pub fn save_result(
    json_path: impl AsRef<Path>,
    result: &ExtractionResult,
    mut meta: ResultFile,
) -> Result<ResultFile, ExtractionError> {
    let json_path = json_path.as_ref();
    let stem = json_path.file_stem().and_then(|s| s.to_str()).unwrap_or("result");
    let sidecar = format!("{stem}.relevancy.f32");
    let dir = json_path.parent().unwrap_or(Path::new("."));
    write_f32_file(dir.join(&sidecar), result.relevancy.iter().map(|&x| x as f32))?;
    meta.relevancy_path = sidecar;
    std::fs::write(json_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(meta)
}

/// Reads a result file and its relevancy sidecar (path relative to the JSON).
pub fn load_result(json_path: impl AsRef<Path>) -> Result<(ResultFile, Vec<f32>), ExtractionError> {
    let json_path = json_path.as_ref();
    let meta: ResultFile = serde_json::from_slice(&std::fs::read(json_path)?)?;
    let dir = json_path.parent().unwrap_or(Path::new("."));
    let rel = read_f32_file(dir.join(&meta.relevancy_path))?;
    Ok((meta, rel))
}

#[cfg(test)]
mod tests;
