use serde::{Deserialize, Serialize};

use super::{ExtractionConfig, ExtractionError, TextEmbedding};
use crate::field::SemanticPointField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelevancyMode {
    /// `max(0, f·q)`
    #[default]
    Cosine,
    /// `min_c exp(f·q) / (exp(f·q) + exp(f·c))` over canonical phrases `c`.
    CanonicalRatio,
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Relevancy of one feature row against `query`.
pub fn score(feature: &[f32], query: &TextEmbedding, mode: RelevancyMode, canonical: &[TextEmbedding]) -> f64 {
    let fq = dot(feature, query.vector());
    match mode {
        RelevancyMode::Cosine => fq.clamp(0.0, 1.0),
        RelevancyMode::CanonicalRatio => canonical
            .iter()
            .map(|c| {
                let fc = dot(feature, c.vector());
                // exp(a)/(exp(a)+exp(b)) written as a logistic for stability
                1.0 / (1.0 + (fc - fq).exp())
            })
            .fold(1.0, f64::min),
    }
}

/// Per-point relevancy at one CLIP level, each score in `[0, 1]`.
pub fn relevancy(
    field: &SemanticPointField,
    query: &TextEmbedding,
    level: usize,
    cfg: &ExtractionConfig,
) -> Result<Vec<f64>, ExtractionError> {
    if level >= crate::field::CLIP_LEVELS {
        return Err(ExtractionError::BadLevel(level));
    }
    let d_clip = field.dims().1;
    if query.vector().len() != d_clip {
        return Err(ExtractionError::QueryDim { got: query.vector().len(), want: d_clip });
    }
    if cfg.relevancy_mode == RelevancyMode::CanonicalRatio {
        if cfg.canonical_embeddings.is_empty() {
            return Err(ExtractionError::MissingCanonical);
        }
        if let Some(c) = cfg.canonical_embeddings.iter().find(|c| c.vector().len() != d_clip) {
            return Err(ExtractionError::QueryDim { got: c.vector().len(), want: d_clip });
        }
    }
    use rayon::prelude::*;
    Ok((0..field.len())
        .into_par_iter()
        .map(|i| score(field.clip(level, i), query, cfg.relevancy_mode, &cfg.canonical_embeddings))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f32]) -> TextEmbedding {
        TextEmbedding::new("q", v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let q = emb(&[1.0, 0.0, 0.0]);
        assert!((score(&[1.0, 0.0, 0.0], &q, RelevancyMode::Cosine, &[]) - 1.0).abs() < 1e-12);
        assert_eq!(score(&[0.0, 1.0, 0.0], &q, RelevancyMode::Cosine, &[]), 0.0);
        assert_eq!(score(&[-1.0, 0.0, 0.0], &q, RelevancyMode::Cosine, &[]), 0.0);
    }

    #[test]
    fn canonical_ratio_symmetry() {
        // f·q = f·c for every canonical phrase
        let q = emb(&[1.0, 0.0, 0.0]);
        let c1 = emb(&[0.0, 1.0, 0.0]);
        let c2 = emb(&[0.0, 0.0, 1.0]);
        let f = [1.0f32, 1.0, 1.0];
        let s = score(&f, &q, RelevancyMode::CanonicalRatio, &[c1.clone(), c2.clone()]);
        assert!((s - 0.5).abs() < 1e-12);
        let s = score(&[1.0, 0.0, 0.0], &q, RelevancyMode::CanonicalRatio, &[c1, c2]);
        let expect = 1.0f64.exp() / (1.0f64.exp() + 1.0);
        assert!((s - expect).abs() < 1e-12);
    }
}
