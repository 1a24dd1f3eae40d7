//! Task-oriented affordance extraction on semantic point fields of an
//! in-hand object: frame filtering, object-conditioned part queries,
//! evaluation and the language-model part selector.

pub mod dataset;
pub mod embeddings;
pub mod eval;
pub mod extraction;
pub mod field;
pub mod frames;
pub mod geometry;
pub mod synth;
pub mod taskllm;

pub use embeddings::EmbeddingTable;
pub use eval::{evaluate, point_iou, EvalReport};
pub use extraction::{extract, single_stage, ExtractionConfig, ExtractionError, ExtractionResult, TextEmbedding};
pub use field::{SemanticPoint, SemanticPointField};
pub use frames::{DepthRange, Frame, Intrinsics};
pub use geometry::{Pose, TaskContext};
pub use synth::{SceneSpec, SynthScene};
pub use taskllm::{Backend, TaskQuery};
