//! Text-embedding tables: an index JSON `[{"text": .., "path": ..}]` whose
//! paths (relative to the index) point at raw little-endian f32 vectors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{read_f32_file, write_f32_file, ExtractionError, TextEmbedding};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no embedding for {0:?}")]
    Missing(String),
    #[error("embedding {text:?}: {source}")]
    Invalid { text: String, source: ExtractionError },
    #[error("embedding index: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    text: String,
    path: String,
}

/// Lookup is by trimmed, lowercased text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    entries: BTreeMap<String, TextEmbedding>,
}

fn key(text: &str) -> String {
    text.trim().to_lowercase()
}

impl EmbeddingTable {
    pub fn insert(&mut self, e: TextEmbedding) {
        self.entries.insert(key(e.text()), e);
    }

    pub fn insert_if_absent(&mut self, e: TextEmbedding) {
        self.entries.entry(key(e.text())).or_insert(e);
    }

    pub fn get(&self, text: &str) -> Option<&TextEmbedding> {
        self.entries.get(&key(text))
    }

    pub fn require(&self, text: &str) -> Result<&TextEmbedding, EmbeddingError> {
        self.get(text).ok_or_else(|| EmbeddingError::Missing(text.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.entries.values().map(|e| e.text())
    }

    /// Writes `index_path` and one `.f32` file per entry in `<stem>/`.
    pub fn save(&self, index_path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
        let index_path = index_path.as_ref();
        let dir = index_path.parent().unwrap_or(Path::new("."));
        let stem = index_path.file_stem().and_then(|s| s.to_str()).unwrap_or("embeddings");
        std::fs::create_dir_all(dir.join(stem))?;
        let mut index = Vec::new();
        for (i, e) in self.entries.values().enumerate() {
            let rel = format!("{stem}/{i:04}.f32");
            write_f32_file(dir.join(&rel), e.vector().iter().copied())?;
            index.push(IndexEntry { text: e.text().to_string(), path: rel });
        }
        std::fs::write(index_path, serde_json::to_string_pretty(&index)? + "\n")?;
        Ok(())
    }

    pub fn load(index_path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let index_path = index_path.as_ref();
        let dir = index_path.parent().unwrap_or(Path::new("."));
        let index: Vec<IndexEntry> = serde_json::from_slice(&std::fs::read(index_path)?)?;
        let mut table = Self::default();
        for entry in index {
            let v = read_f32_file(dir.join(&entry.path))?;
            let e = TextEmbedding::new(&entry.text, v)
                .map_err(|source| EmbeddingError::Invalid { text: entry.text.clone(), source })?;
            table.insert(e);
        }
        Ok(table)
    }
}
