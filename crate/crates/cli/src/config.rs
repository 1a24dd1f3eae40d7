//! Run configuration. Relative paths resolve against the config file's
//! directory, or the working directory when no file is given.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toao_core::extraction::ExtractionConfig;
use toao_core::frames::{DepthRange, DEFAULT_THETA_D};
use toao_core::taskllm::{Backend, HttpBackend, StubTable};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    /// Canned answers; `table` defaults to the two bundled sunflower replies.
    Stub {
        #[serde(default)]
        table: Option<PathBuf>,
    },
    Http {
        #[serde(default)]
        endpoint: Option<String>,
        model: String,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

fn default_timeout() -> f64 {
    30.0
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Stub { table: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_dir: PathBuf,
    /// Semantic point field; defaults to `<dataset_dir>/field.gff`.
    pub field: Option<PathBuf>,
    /// Text-embedding index; defaults to `<dataset_dir>/embeddings.json`.
    pub embeddings: Option<PathBuf>,
    /// Ground-truth labels for `eval`; defaults to `<dataset_dir>/labels.json`.
    pub labels: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub theta_d: f64,
    pub depth_range: DepthRange,
    pub extraction: ExtractionConfig,
    pub backend: BackendConfig,
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("dataset"),
            field: None,
            embeddings: None,
            labels: None,
            output_dir: PathBuf::from("out"),
            theta_d: DEFAULT_THETA_D,
            depth_range: DepthRange::default(),
            extraction: ExtractionConfig::default(),
            backend: BackendConfig::default(),
            seed: None,
        }
    }
}

fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset_dir = rebase(base, &cfg.dataset_dir);
        cfg.output_dir = rebase(base, &cfg.output_dir);
        for p in [&mut cfg.field, &mut cfg.embeddings, &mut cfg.labels].into_iter().flatten() {
            *p = rebase(base, p);
        }
        if let BackendConfig::Stub { table: Some(t) } = &mut cfg.backend {
            *t = rebase(base, t);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(0.0..=1.0).contains(&self.theta_d) {
            return Err(CliError::input(format!("theta_d {} outside [0, 1]", self.theta_d)));
        }
        DepthRange::new(self.depth_range.min, self.depth_range.max).map_err(|e| CliError::input(e.to_string()))?;
        self.extraction.validate().map_err(|e| CliError::input(e.to_string()))
    }

    pub fn field_path(&self) -> PathBuf {
        self.field.clone().unwrap_or_else(|| self.dataset_dir.join("field.gff"))
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.embeddings.clone().unwrap_or_else(|| self.dataset_dir.join("embeddings.json"))
    }

    pub fn labels_path(&self) -> PathBuf {
        self.labels.clone().unwrap_or_else(|| self.dataset_dir.join("labels.json"))
    }

    pub fn backend(&self) -> Result<Backend, CliError> {
        match &self.backend {
            BackendConfig::Stub { table: None } => Ok(Backend::Stub(StubTable::bundled())),
            BackendConfig::Stub { table: Some(p) } => {
                StubTable::from_file(p).map(Backend::Stub).map_err(|e| CliError::input(format!("{}: {e}", p.display())))
            }
            BackendConfig::Http { endpoint, model, timeout_secs } => HttpBackend::new(endpoint.clone(), model, *timeout_secs)
                .map(Backend::Http)
                .map_err(|e| CliError::input(e.to_string())),
        }
    }
}
