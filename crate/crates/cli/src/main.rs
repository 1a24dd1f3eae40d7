//! `toao`: synthetic data, frame filtering, part extraction, evaluation and
//! the language-model part query, as subcommands sharing one JSON config.
//!
//! Exit status: 0 ok, 2 usage or input error, 3 no frame survived
//! preprocessing, 4 extraction found nothing.

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use serde::Serialize;

use toao_core::dataset::{read_dataset, write_ply, write_dataset};
use toao_core::eval::{evaluate, reference_rows, render_table, write_csv, EvalReport, Scored};
use toao_core::extraction::{load_result, save_result, ExtractionError, ResultFile};
use toao_core::field::{load_field, save_field};
use toao_core::frames::{depth_coverage, preprocess_session, FrameError};
use toao_core::synth::{generate_field, label_for, render_frames_from, LabelEntry, SceneSpec};
use toao_core::taskllm::{build_prompt, Resolver, TaskQuery};
use toao_core::geometry::toao_pose;
use toao_core::{extract, single_stage, EmbeddingTable, Pose};

use config::RunConfig;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn no_frames(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    fn nothing_extracted(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "toao", version, about = "Task-oriented affordance extraction on semantic point fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags that override the config file.
#[derive(Args, Clone)]
struct Common {
    /// Run configuration (JSON); paths inside are relative to it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    theta_d: Option<f64>,
    #[arg(long)]
    theta_dino: Option<f64>,
    #[arg(long)]
    fine_percentile: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(v) = &self.dataset_dir {
            cfg.dataset_dir = v.clone();
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = &self.field {
            cfg.field = Some(v.clone());
        }
        if let Some(v) = &self.embeddings {
            cfg.embeddings = Some(v.clone());
        }
        if let Some(v) = self.theta_d {
            cfg.theta_d = v;
        }
        if let Some(v) = self.theta_dino {
            cfg.extraction.theta_dino = v;
        }
        if let Some(v) = self.fine_percentile {
            cfg.extraction.fine_percentile = v;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic session: frames, field, labels and text embeddings.
    Synth {
        /// Scene spec JSON, or `flower` / `flower-adversarial` for the bundled ones.
        #[arg(long, default_value = "flower")]
        spec: String,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Keep frames with enough valid depth inside the mask and write them masked.
    Preprocess {
        #[command(flatten)]
        common: Common,
    },
    /// Extract the task-relevant part of the object.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Object text (O).
        #[arg(long)]
        object: String,
        /// Task text (T); the part is asked from the configured backend.
        #[arg(long, required_unless_present = "part")]
        task: Option<String>,
        /// Part text; skips the backend.
        #[arg(long)]
        part: Option<String>,
        /// Unconditioned single-stage thresholding instead of the two-stage extraction.
        #[arg(long)]
        baseline: bool,
        /// Output file stem; defaults to `<method>-<part>`.
        #[arg(long)]
        name: Option<String>,
    },
    /// Score result files against the field's labels.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Result JSON files or glob patterns.
        #[arg(required = true)]
        results: Vec<String>,
        /// Also write per-query rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Print the JSON report instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Ask the backend which part serves a task.
    Ask {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        object: String,
        #[arg(long)]
        task: String,
        /// Print the prompt before the answer.
        #[arg(long)]
        show_prompt: bool,
    },
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| io_err(path, e))
}

fn load_spec(spec: &str) -> Result<SceneSpec, CliError> {
    let s = match spec {
        "flower" => SceneSpec::flower(),
        "flower-adversarial" => SceneSpec::flower_adversarial(),
        path => SceneSpec::from_file(path).map_err(|e| CliError::input(format!("{path}: {e}")))?,
    };
    s.validate().map_err(|e| CliError::input(format!("{spec}: {e}")))?;
    Ok(s)
}

fn cmd_synth(spec: &str, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut spec = load_spec(spec)?;
    if let Some(s) = seed {
        spec.rng_seed = s;
    }
    let scene = generate_field(&spec).map_err(|e| CliError::input(e.to_string()))?;
    let frames: Vec<_> = render_frames_from(&scene)
        .map_err(|e| CliError::input(e.to_string()))?
        .into_iter()
        .map(|r| r.frame)
        .collect();
    write_dataset(out, &frames).map_err(|e| io_err(out, e))?;
    let field_path = out.join("field.gff");
    save_field(&scene.field, &field_path).map_err(|e| io_err(&field_path, e))?;
    write_json(&out.join("labels.json"), &spec.label_entries())?;
    let vocab = spec.vocabulary(0, 2).map_err(|e| CliError::input(e.to_string()))?;
    let emb = out.join("embeddings.json");
    vocab.save(&emb).map_err(|e| io_err(&emb, e))?;
    write_json(&out.join("spec.json"), &spec)?;
    println!(
        "wrote {} frames, {} field points, {} labels to {}",
        frames.len(),
        scene.field.len(),
        spec.parts.len() + spec.distractors.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CoverageRow {
    index: u32,
    a_d: u64,
    a_m: u64,
    r_d: f64,
    retained: bool,
}

#[derive(Serialize)]
struct PreprocessReport {
    theta_d: f64,
    total: usize,
    retained: Vec<u32>,
    frames: Vec<CoverageRow>,
}

fn cmd_preprocess(cfg: &RunConfig) -> Result<(), CliError> {
    let frames = read_dataset(&cfg.dataset_dir).map_err(|e| io_err(&cfg.dataset_dir, e))?;
    let kept = match preprocess_session(&frames, cfg.theta_d, cfg.depth_range) {
        Ok(k) => k,
        Err(e @ FrameError::NoFramesRetained(_)) => return Err(CliError::no_frames(e.to_string())),
        Err(e) => return Err(CliError::input(e.to_string())),
    };
    let rows: Vec<CoverageRow> = frames
        .iter()
        .map(|f| match depth_coverage(f, cfg.depth_range, cfg.theta_d) {
            Ok(c) => CoverageRow { index: f.index, a_d: c.a_d, a_m: c.a_m, r_d: c.r_d, retained: c.r_d >= c.theta_d },
            Err(_) => CoverageRow { index: f.index, a_d: 0, a_m: 0, r_d: 0.0, retained: false },
        })
        .collect();
    let out = cfg.output_dir.join("preprocessed");
    if out.exists() {
        std::fs::remove_dir_all(&out).map_err(|e| io_err(&out, e))?;
    }
    write_dataset(&out, &kept).map_err(|e| io_err(&out, e))?;
    let report = PreprocessReport {
        theta_d: cfg.theta_d,
        total: frames.len(),
        retained: kept.iter().map(|f| f.index).collect(),
        frames: rows,
    };
    write_json(&out.join("report.json"), &report)?;
    println!("retained {}/{} frames", kept.len(), frames.len());
    Ok(())
}

struct ExtractArgs<'a> {
    object: &'a str,
    task: Option<&'a str>,
    part: Option<&'a str>,
    baseline: bool,
    name: Option<&'a str>,
}

fn cmd_extract(cfg: &RunConfig, a: ExtractArgs) -> Result<(), CliError> {
    let part = match (a.part, a.task) {
        (Some(p), _) => p.trim().to_lowercase(),
        (None, Some(task)) => {
            let q = TaskQuery::new(a.object, task).map_err(|e| CliError::input(e.to_string()))?;
            let resolved = Resolver::new(cfg.backend()?).resolve(&q).map_err(|e| CliError::input(e.to_string()))?;
            resolved.part_text.expect("resolved query carries a part")
        }
        (None, None) => return Err(CliError::input("either --task or --part is required")),
    };
    let field_path = cfg.field_path();
    let field = load_field(&field_path).map_err(|e| io_err(&field_path, e))?;
    let emb_path = cfg.embeddings_path();
    let vocab = EmbeddingTable::load(&emb_path).map_err(|e| io_err(&emb_path, e))?;
    let mut ecfg = cfg.extraction.clone();
    ecfg.canonical_embeddings = ecfg
        .canonical_phrases
        .iter()
        .filter_map(|p| vocab.get(p).cloned())
        .collect();
    let part_emb = vocab.require(&part).map_err(|e| CliError::nothing_extracted(e.to_string()))?;
    let method = if a.baseline { "single-stage" } else { "two-stage" };
    let result = if a.baseline {
        single_stage(&field, part_emb, &ecfg)
    } else {
        let object_emb = vocab.require(a.object).map_err(|e| CliError::nothing_extracted(e.to_string()))?;
        extract(&field, object_emb, part_emb, &ecfg)
    };
    let result = match result {
        Ok(r) => r,
        Err(e @ ExtractionError::NoRelevantPoints(_)) => return Err(CliError::nothing_extracted(e.to_string())),
        Err(e) => return Err(CliError::input(e.to_string())),
    };

    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    let stem = a.name.map(str::to_string).unwrap_or_else(|| format!("{method}-{}", part.replace(' ', "_")));
    let c = result.toao_centroid;
    let mut meta = ResultFile::from_result(&result, String::new());
    meta.method = method.to_string();
    meta.object_query = a.object.to_string();
    meta.part_query = part.clone();
    // the field lives in the object-attached frame, which moves rigidly with the gripper
    meta.toao_pose = Some(toao_pose(&c, &Pose::identity()));
    let json = cfg.output_dir.join(format!("{stem}.json"));
    save_result(&json, &result, meta).map_err(|e| io_err(&json, e))?;
    let ply = cfg.output_dir.join(format!("{stem}.ply"));
    let pts: Vec<Vector3<f64>> = result.toao.iter().map(|&i| *field.position(i)).collect();
    let scores: Vec<f64> = result.toao.iter().map(|&i| result.relevancy[i]).collect();
    write_ply(&ply, &pts, &scores).map_err(|e| io_err(&ply, e))?;
    println!(
        "{method} part {part:?}: {} of {} points (object mask {}), centroid [{:.4}, {:.4}, {:.4}] m -> {}",
        result.toao.len(),
        field.len(),
        result.object_mask.len(),
        c.x,
        c.y,
        c.z,
        json.display()
    );
    Ok(())
}

fn expand(patterns: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in patterns {
        let paths = glob::glob(p).map_err(|e| CliError::input(format!("{p}: {e}")))?;
        out.extend(paths.filter_map(Result::ok));
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn cmd_eval(cfg: &RunConfig, results: &[String], csv: Option<&Path>, json: bool) -> Result<(), CliError> {
    let files = expand(results)?;
    if files.is_empty() {
        return Err(CliError::input("no result files matched"));
    }
    let labels_path = cfg.labels_path();
    let labels: Vec<LabelEntry> = read_json(&labels_path)?;
    let field_path = cfg.field_path();
    let field = load_field(&field_path).map_err(|e| io_err(&field_path, e))?;
    let point_labels = field.labels().ok_or_else(|| io_err(&field_path, "field has no labels"))?;

    struct Loaded {
        query: String,
        toao: Vec<usize>,
        relevancy: Vec<f64>,
        gt: Vec<usize>,
    }
    let mut by_method: BTreeMap<String, Vec<Loaded>> = BTreeMap::new();
    for f in &files {
        let (meta, rel) = load_result(f).map_err(|e| io_err(f, e))?;
        let label = label_for(&labels, &meta.part_query)
            .ok_or_else(|| io_err(f, format!("no ground-truth label named {:?}", meta.part_query)))?;
        let gt = (0..point_labels.len()).filter(|&i| point_labels[i] == label).collect();
        let method = if meta.method.is_empty() { "unnamed".to_string() } else { meta.method.clone() };
        by_method.entry(method).or_default().push(Loaded {
            query: meta.part_query,
            toao: meta.toao,
            relevancy: rel.into_iter().map(f64::from).collect(),
            gt,
        });
    }
    let mut reports: Vec<EvalReport> = Vec::new();
    for (method, items) in &by_method {
        let scored: Vec<Scored> = items
            .iter()
            .map(|l| Scored { query: &l.query, toao: &l.toao, relevancy: &l.relevancy, gt: &l.gt })
            .collect();
        reports.push(evaluate(&scored, method).map_err(|e| CliError::input(e.to_string()))?);
    }
    let reference = reference_rows().map_err(|e| CliError::input(e.to_string()))?;
    let table = render_table(&reports, &reference);
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    write_json(&cfg.output_dir.join("eval.json"), &reports)?;
    let txt = cfg.output_dir.join("eval.txt");
    std::fs::write(&txt, &table).map_err(|e| io_err(&txt, e))?;
    if let Some(path) = csv {
        let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
        write_csv(&reports, file).map_err(|e| io_err(path, e))?;
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&reports).expect("report serializes"));
    } else {
        print!("{table}");
    }
    Ok(())
}

fn cmd_ask(cfg: &RunConfig, object: &str, task: &str, show_prompt: bool) -> Result<(), CliError> {
    let q = TaskQuery::new(object, task).map_err(|e| CliError::input(e.to_string()))?;
    if show_prompt {
        println!("{}\n", build_prompt(&q).map_err(|e| CliError::input(e.to_string()))?);
    }
    let resolved = Resolver::new(cfg.backend()?).resolve(&q).map_err(|e| CliError::input(e.to_string()))?;
    println!("{}", resolved.part_text.unwrap_or_default());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { spec, out, seed } => cmd_synth(&spec, &out, seed),
        Command::Preprocess { common } => cmd_preprocess(&common.resolve()?),
        Command::Extract { common, object, task, part, baseline, name } => cmd_extract(
            &common.resolve()?,
            ExtractArgs {
                object: &object,
                task: task.as_deref(),
                part: part.as_deref(),
                baseline,
                name: name.as_deref(),
            },
        ),
        Command::Eval { common, results, csv, json } => cmd_eval(&common.resolve()?, &results, csv.as_deref(), json),
        Command::Ask { common, object, task, show_prompt } => cmd_ask(&common.resolve()?, &object, &task, show_prompt),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
