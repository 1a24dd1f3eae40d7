//! Segmentation and localization scores over 3-D point index sets.
//!
//! IoU is computed between predicted and ground-truth point sets of the same
//! field. Localization accuracy counts a query as a hit when the point with
//! the highest relevancy (lowest index on ties) lies inside the ground truth.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{argmax, ExtractionResult};

const REFERENCE_TABLE: &str = include_str!("../data/reference_table.csv");

pub const ACCURACY_FOOTNOTE: &str = "mIoU: mean over queries of |pred ∩ gt| / |pred ∪ gt| on 3-D point sets. \
Accuracy: share of queries whose highest-relevancy point (lowest index on ties) lies in the ground-truth part.";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and ground truth are both empty")]
    BothEmpty,
    #[error("ground truth for {0:?} is empty")]
    EmptyGroundTruth(String),
    #[error("nothing to evaluate")]
    NoInputs,
    #[error("reference table: {0}")]
    Reference(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn point_iou(pred: &[usize], gt: &[usize]) -> Result<f64, EvalError> {
    let pred: BTreeSet<usize> = pred.iter().copied().collect();
    let gt: BTreeSet<usize> = gt.iter().copied().collect();
    let union = pred.union(&gt).count();
    if union == 0 {
        return Err(EvalError::BothEmpty);
    }
    Ok(pred.intersection(&gt).count() as f64 / union as f64)
}

pub fn localization_hit(relevancy: &[f64], gt: &[usize]) -> bool {
    argmax(relevancy).is_some_and(|best| gt.contains(&best))
}

/// One query's prediction, borrowed from an extraction result or a loaded
/// result file.
#[derive(Debug, Clone, Copy)]
pub struct Scored<'a> {
    pub query: &'a str,
    pub toao: &'a [usize],
    pub relevancy: &'a [f64],
    pub gt: &'a [usize],
}

impl<'a> Scored<'a> {
    pub fn from_result(result: &'a ExtractionResult, gt: &'a [usize], query: &'a str) -> Self {
        Self { query, toao: &result.toao, relevancy: &result.relevancy, gt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query: String,
    pub iou: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method_name: String,
    pub per_query: Vec<QueryScore>,
    pub miou: f64,
    pub accuracy: f64,
}

pub fn evaluate(items: &[Scored<'_>], method: &str) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::NoInputs);
    }
    let mut per_query = Vec::with_capacity(items.len());
    for it in items {
        if it.gt.is_empty() {
            return Err(EvalError::EmptyGroundTruth(it.query.to_string()));
        }
        per_query.push(QueryScore {
            query: it.query.to_string(),
            iou: point_iou(it.toao, it.gt)?,
            hit: localization_hit(it.relevancy, it.gt),
        });
    }
    let n = per_query.len() as f64;
    let miou = per_query.iter().map(|q| q.iou).sum::<f64>() / n;
    let accuracy = per_query.iter().filter(|q| q.hit).count() as f64 / n;
    Ok(EvalReport { method_name: method.to_string(), per_query, miou, accuracy })
}

/// Published numbers, in percent; `None` where the method failed to produce any.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReferenceRow {
    pub method: String,
    #[serde(rename = "miou_percent", deserialize_with = "nan_as_none")]
    pub miou: Option<f64>,
    #[serde(rename = "accuracy_percent", deserialize_with = "nan_as_none")]
    pub accuracy: Option<f64>,
}

fn nan_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    let s = String::deserialize(d)?;
    if s.trim().eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.trim().parse().map(Some).map_err(serde::de::Error::custom)
}

pub fn reference_rows() -> Result<Vec<ReferenceRow>, EvalError> {
    let mut rdr = csv::Reader::from_reader(REFERENCE_TABLE.as_bytes());
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NAN".to_string(), |x| format!("{x:.1}"))
}

/// Aligned plain-text table: one row per report, then the reference rows.
pub fn render_table(reports: &[EvalReport], reference: &[ReferenceRow]) -> String {
    let mut rows: Vec<[String; 3]> = vec![["method".into(), "mIoU (%)".into(), "Accuracy (%)".into()]];
    for r in reports {
        rows.push([r.method_name.clone(), pct(Some(100.0 * r.miou)), pct(Some(100.0 * r.accuracy))]);
    }
    let measured = rows.len();
    for r in reference {
        rows.push([format!("{} (reference)", r.method), pct(r.miou), pct(r.accuracy)]);
    }
    let width: Vec<usize> = (0..3).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        if i == 1 || (i == measured && !reference.is_empty()) {
            let _ = writeln!(out, "{}", "-".repeat(width.iter().sum::<usize>() + 4));
        }
        let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", r[0], r[1], r[2], w0 = width[0], w1 = width[1], w2 = width[2]);
    }
    if !reference.is_empty() {
        out.push_str("\nReference rows are published numbers on a different dataset, for context only.\n");
    }
    out.push('\n');
    out.push_str(ACCURACY_FOOTNOTE);
    out.push('\n');
    out
}

/// One CSV row per query: `method,query,iou,hit`.
pub fn write_csv<W: io::Write>(reports: &[EvalReport], w: W) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["method", "query", "iou", "hit"])?;
    for r in reports {
        for q in &r.per_query {
            wtr.write_record([r.method_name.as_str(), q.query.as_str(), &format!("{:.6}", q.iou), &q.hit.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
