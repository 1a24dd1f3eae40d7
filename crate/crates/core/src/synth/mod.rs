//! Deterministic synthetic scenes: multi-part objects with ground-truth part
//! labels, analytic feature fields, rendered RGB-D frames and a wrist sweep.
//!
//! # Randomness
//!
//! All sampling uses PCG64 (`rand_pcg::Pcg64`, the XSL-RR 128/64 variant)
//! seeded through `SeedableRng::seed_from_u64`. The field stream is seeded
//! with `rng_seed` and consumed part by part (parts, then distractors): grid
//! jitter for the part's surface samples first, then for each point the
//! DINO noise followed by CLIP levels 0, 1 and 2. Rendering draws depth
//! dropout from a second stream seeded with `rng_seed ^ RENDER_STREAM`.
//!
//! Anchor keys map to unit vectors independently of the scene seed: the key
//! bytes are hashed with 64-bit FNV-1a, xor-ed with the vector dimension,
//! and the result seeds a PCG64 that draws standard normals which are then
//! normalized.

mod render;
mod sampling;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::EmbeddingTable;
use crate::extraction::{TextEmbedding, DEFAULT_CANONICAL_PHRASES};
use crate::field::{SemanticPoint, SemanticPointField, CLIP_LEVELS};
use crate::frames::{FrameError, Intrinsics};
use crate::geometry::Pose;

pub use render::{render_frame, render_frames, render_frames_from, RenderedFrame};
pub use sampling::Primitive;

pub const RENDER_STREAM: u64 = 0x5E_ED0F_DE97;
pub const DEFAULT_FRAMES: usize = 156;

/// Bundled three-part flower scene.
pub const FLOWER_SPEC: &str = include_str!("../../fixtures/flower.json");
/// Flower plus a table and a CLIP-aliased twig.
pub const FLOWER_ADVERSARIAL_SPEC: &str = include_str!("../../fixtures/flower_adversarial.json");

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("object projects outside the image in frame {0}")]
    ObjectOutOfView(usize),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("spec json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Either a single key or a weighted blend of keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Anchor {
    Key(String),
    Blend(Vec<(String, f64)>),
}

impl Anchor {
    fn terms(&self) -> Vec<(&str, f64)> {
        match self {
            Anchor::Key(k) => vec![(k.as_str(), 1.0)],
            Anchor::Blend(v) => v.iter().map(|(k, w)| (k.as_str(), *w)).collect(),
        }
    }

    pub fn vector(&self, dim: usize) -> Result<Vec<f64>, SynthError> {
        let mut v = vec![0.0; dim];
        for (key, w) in self.terms() {
            for (acc, x) in v.iter_mut().zip(key_vector(key, dim)) {
                *acc += w * x;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 1e-8) {
            return Err(SynthError::InvalidSpec(format!("anchor {self:?} has zero norm")));
        }
        Ok(v.into_iter().map(|x| x / n).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Unit vector for an anchor key.
pub fn key_vector(key: &str, dim: usize) -> Vec<f64> {
    let mut rng = Pcg64::seed_from_u64(fnv1a(key.as_bytes()) ^ dim as u64);
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartSpec {
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub geometry: Primitive,
    /// Placement in the object-attached frame.
    #[serde(default)]
    pub pose: Pose,
    pub clip_anchor: [Anchor; CLIP_LEVELS],
    pub dino_anchor: Anchor,
    pub points_per_part: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WristSweep {
    pub frames: usize,
    #[serde(default)]
    pub base: Pose,
    /// Rotation axis in the end-effector frame.
    #[serde(default = "z_axis")]
    pub axis: [f64; 3],
    #[serde(default = "full_turn")]
    pub angle: f64,
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn full_turn() -> f64 {
    2.0 * std::f64::consts::PI
}

impl Default for WristSweep {
    fn default() -> Self {
        Self { frames: DEFAULT_FRAMES, base: Pose::identity(), axis: z_axis(), angle: full_turn() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Trajectory {
    Sweep { wrist_sweep: WristSweep },
    Explicit(Vec<Pose>),
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory::Sweep { wrist_sweep: WristSweep::default() }
    }
}

impl Trajectory {
    /// End-effector poses `W_E T`, one per frame.
    pub fn poses(&self) -> Vec<Pose> {
        match self {
            Trajectory::Explicit(p) => p.clone(),
            Trajectory::Sweep { wrist_sweep: s } => (0..s.frames)
                .map(|k| {
                    let roll = s.angle * k as f64 / s.frames as f64;
                    s.base.compose(&Pose::from_axis_angle(Vector3::from(s.axis), roll, Vector3::zeros()))
                })
                .collect(),
        }
    }
}

fn default_d_dino() -> usize {
    64
}

fn default_d_clip() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub object: ObjectSpec,
    pub parts: Vec<PartSpec>,
    #[serde(default)]
    pub distractors: Vec<PartSpec>,
    /// Expected norm of the feature noise added to each unit anchor.
    pub noise_sigma: f64,
    #[serde(default = "default_d_dino")]
    pub d_dino: usize,
    #[serde(default = "default_d_clip")]
    pub d_clip: usize,
    #[serde(default)]
    pub trajectory: Trajectory,
    pub cam_pose: Pose,
    pub intrinsics: Intrinsics,
    pub rng_seed: u64,
    /// Probability that a rendered object pixel loses its depth reading.
    #[serde(default)]
    pub depth_dropout: f64,
    /// Half-width in pixels of each point splat.
    #[serde(default)]
    pub splat_radius: u32,
}

impl SceneSpec {
    pub fn from_json(s: &str) -> Result<Self, SynthError> {
        let spec: SceneSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn flower() -> Self {
        Self::from_json(FLOWER_SPEC).expect("bundled flower spec")
    }

    pub fn flower_adversarial() -> Self {
        Self::from_json(FLOWER_ADVERSARIAL_SPEC).expect("bundled adversarial spec")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.parts.is_empty() {
            return bad("at least one part is required".into());
        }
        if self.trajectory.poses().is_empty() {
            return bad("trajectory is empty".into());
        }
        if self.d_dino == 0 || self.d_clip == 0 {
            return bad("feature dimensions must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be non-negative", self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.depth_dropout) {
            return bad(format!("depth_dropout {} outside [0, 1]", self.depth_dropout));
        }
        if self.object.name.trim().is_empty() {
            return bad("object name is empty".into());
        }
        if self.parts.len() + self.distractors.len() > u16::MAX as usize {
            return bad("too many parts".into());
        }
        self.intrinsics.validate()?;
        for p in self.parts.iter().chain(&self.distractors) {
            p.geometry.validate().map_err(SynthError::InvalidSpec)?;
            if p.points_per_part == 0 {
                return bad(format!("part {:?} has no points", p.name));
            }
            p.dino_anchor.vector(self.d_dino)?;
            for a in &p.clip_anchor {
                a.vector(self.d_clip)?;
            }
        }
        Ok(())
    }

    /// Parts followed by distractors; the position is the label id.
    pub fn all_parts(&self) -> impl Iterator<Item = &PartSpec> {
        self.parts.iter().chain(&self.distractors)
    }

    pub fn label_names(&self) -> BTreeMap<u16, String> {
        self.all_parts().enumerate().map(|(i, p)| (i as u16, p.name.clone())).collect()
    }

    /// Label of the part called `name` (or one of its aliases), case-insensitive.
    pub fn label_of(&self, name: &str) -> Option<u16> {
        let name = name.trim().to_lowercase();
        self.all_parts()
            .position(|p| p.name.to_lowercase() == name || p.aliases.iter().any(|a| a.to_lowercase() == name))
            .map(|i| i as u16)
    }

    pub fn is_distractor(&self, label: u16) -> bool {
        label as usize >= self.parts.len()
    }

    /// Synthetic text dictionary: the object name maps to the coarse-level
    /// anchor of the first part, part names to their fine-level anchor, and
    /// the canonical phrases to their key vectors.
    pub fn vocabulary(&self, coarse_level: usize, fine_level: usize) -> Result<EmbeddingTable, SynthError> {
        let mut table = EmbeddingTable::default();
        let mut add = |text: &str, v: Vec<f64>| {
            let e = TextEmbedding::new(text, v.into_iter().map(|x| x as f32).collect())
                .expect("anchors are unit vectors");
            table.insert_if_absent(e);
        };
        let object = self.parts[0].clip_anchor[coarse_level].vector(self.d_clip)?;
        for name in std::iter::once(&self.object.name).chain(&self.object.aliases) {
            add(name, object.clone());
        }
        for p in self.all_parts() {
            let v = p.clip_anchor[fine_level].vector(self.d_clip)?;
            for name in std::iter::once(&p.name).chain(&p.aliases) {
                add(name, v.clone());
            }
        }
        for phrase in DEFAULT_CANONICAL_PHRASES {
            add(phrase, key_vector(phrase, self.d_clip));
        }
        Ok(table)
    }
}

/// Ground-truth label description written next to a synthetic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub label: u16,
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub distractor: bool,
}

impl LabelEntry {
    pub fn matches(&self, text: &str) -> bool {
        let t = text.trim();
        std::iter::once(&self.name).chain(&self.aliases).any(|n| n.eq_ignore_ascii_case(t))
    }
}

impl SceneSpec {
    pub fn label_entries(&self) -> Vec<LabelEntry> {
        self.all_parts()
            .enumerate()
            .map(|(i, p)| LabelEntry {
                label: i as u16,
                name: p.name.clone(),
                aliases: p.aliases.clone(),
                distractor: i >= self.parts.len(),
            })
            .collect()
    }
}

/// First non-distractor label whose name or alias equals `text` (case-insensitive).
pub fn label_for(entries: &[LabelEntry], text: &str) -> Option<u16> {
    entries.iter().find(|e| !e.distractor && e.matches(text)).map(|e| e.label)
}

/// Field plus the anchors it was generated from.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub spec: SceneSpec,
    pub field: SemanticPointField,
}

impl SynthScene {
    /// Ground-truth point set of a part.
    pub fn part_points(&self, label: u16) -> Vec<usize> {
        self.field.points_with_label(label)
    }

    /// Indices of non-distractor points.
    pub fn object_points(&self) -> Vec<usize> {
        let labels = self.field.labels().expect("synthetic fields carry labels");
        (0..labels.len()).filter(|&i| !self.spec.is_distractor(labels[i])).collect()
    }
}

fn noisy<R: Rng + ?Sized>(anchor: &[f64], sigma: f64, rng: &mut R) -> Vec<f32> {
    let scale = sigma / (anchor.len() as f64).sqrt();
    let v: Vec<f64> = anchor
        .iter()
        .map(|&a| {
            let z: f64 = StandardNormal.sample(rng);
            a + scale * z
        })
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| (x / n) as f32).collect()
}

/// Samples every part surface and attaches noisy anchor features.
///
/// Per-component noise has standard deviation `noise_sigma / sqrt(D)`, so
/// `noise_sigma` is the expected noise norm relative to the unit anchor.
pub fn generate_field(spec: &SceneSpec) -> Result<SynthScene, SynthError> {
    spec.validate()?;
    let mut rng = Pcg64::seed_from_u64(spec.rng_seed);
    let mut points = Vec::new();
    for (label, part) in spec.all_parts().enumerate() {
        let dino = part.dino_anchor.vector(spec.d_dino)?;
        let clip: Vec<Vec<f64>> =
            part.clip_anchor.iter().map(|a| a.vector(spec.d_clip)).collect::<Result<_, _>>()?;
        let local = part.geometry.sample(part.points_per_part, &mut rng);
        for p in local {
            let q = part.pose.transform_vector(&p);
            let dino_row = noisy(&dino, spec.noise_sigma, &mut rng);
            let clip_rows: [Vec<f32>; CLIP_LEVELS] = std::array::from_fn(|l| noisy(&clip[l], spec.noise_sigma, &mut rng));
            points.push(SemanticPoint {
                position: [q.x as f32, q.y as f32, q.z as f32],
                dino: dino_row,
                clip: clip_rows,
                label: Some(label as u16),
            });
        }
    }
    let field = SemanticPointField::build(points).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok(SynthScene { spec: spec.clone(), field })
}
