//! Metric reports, curve exports and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use oodkit_core::metrics::{auprc, auroc, fpr_at_tpr, pr_points, roc_points, ScoreSet};
use serde::Serialize;

use crate::error::{CoreContext, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub method: String,
    pub auroc: f64,
    pub auprc: f64,
    /// False-positive rate at the requested TPR, as a rate in `[0, 1]`.
    pub fpr95: f64,
    pub fpr95_percent: f64,
    pub tpr_percent: f64,
    pub m: usize,
    pub n: usize,
}

impl MetricsReport {
    pub fn compute(method: &str, scores: &ScoreSet, tpr_percent: f64) -> Result<Self> {
        let fpr = fpr_at_tpr(scores, tpr_percent).context("fpr at tpr")?;
        Ok(Self {
            method: method.to_owned(),
            auroc: auroc(scores).context("auroc")?,
            auprc: auprc(scores).context("auprc")?,
            fpr95: fpr,
            fpr95_percent: fpr * 100.0,
            tpr_percent,
            m: scores.m(),
            n: scores.n(),
        })
    }
}

fn points_csv(header: &str, points: &[(f64, f64)]) -> String {
    let mut out = String::with_capacity(points.len() * 24);
    out.push_str(header);
    out.push('\n');
    for (a, b) in points {
        let _ = writeln!(out, "{a},{b}");
    }
    out
}

/// Writes `roc.csv` (fpr,tpr) and `pr.csv` (recall,precision) into `dir`.
pub fn write_curves(dir: &Path, scores: &ScoreSet) -> Result<()> {
    let roc = roc_points(scores).context("roc curve")?;
    let pr = pr_points(scores).context("pr curve")?;
    write_text(&dir.join("roc.csv"), &points_csv("fpr,tpr", &roc))?;
    write_text(&dir.join("pr.csv"), &points_csv("recall,precision", &pr))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    write_text(path, &text)
}

/// Echo of a run: the subcommand, its fully resolved configuration and
/// the values the run derived (ridge, oversampling factor, ...).
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub derived: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str, config: serde_json::Value) -> Self {
        Self {
            tool: "oodkit",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            derived: serde_json::Value::Object(Default::default()),
            outputs: Vec::new(),
        }
    }

    pub fn derive(&mut self, key: &str, value: impl Serialize) {
        if let serde_json::Value::Object(map) = &mut self.derived {
            map.insert(key.to_owned(), serde_json::to_value(value).expect("serializable value"));
        }
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.to_owned());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}
