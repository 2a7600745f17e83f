//! The `oodkit` command line.

use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use oodkit_core::maha::fit_gaussian;
use oodkit_core::metrics::{ScoreSet, DEFAULT_TPR_PERCENT};
use oodkit_core::oe::{subsample_shots, train_oe_head_with_validation, ClassLayout, HeadKind, OeConfig, OeHead, Validation};
use oodkit_core::probs::{score_in_mass, score_msp, LogitSet, ValueKind};
use oodkit_core::zshot::{score_zshot, CandidateLabels, ZshotMode, ZshotOptions};
use oodkit_core::{EmbeddingSet, GaussianModel, PartitionMode};
use serde::Serialize;

use crate::error::{CoreContext, Error, Result};
use crate::format::{self, Format};
use crate::parallel;
use crate::pca::Pca;
use crate::report::{write_curves, write_json, write_text, Manifest, MetricsReport};

#[derive(Debug, Parser)]
#[command(name = "oodkit", version, about = "Out-of-distribution scoring on precomputed embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a shared-covariance Gaussian model to labeled embeddings.
    Fit(FitArgs),
    /// Score one file of embeddings or logits.
    Score(ScoreArgs),
    /// Score an in/out pair and report AUROC, AUPRC and FPR at a TPR.
    Eval(EvalArgs),
    /// Train an outlier-exposure head.
    TrainOe(TrainOeArgs),
    /// Zero-shot scoring against candidate-label text embeddings.
    Zshot(ZshotArgs),
    /// Project embeddings onto their leading principal components.
    Pca(PcaArgs),
    /// Run the human-benchmark HTTP service.
    ServeBench(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Negated minimum Mahalanobis distance to a class mean.
    Maha,
    /// Maximum softmax probability of logits.
    Msp,
    /// Softmax mass on the in-distribution columns of logits.
    InMass,
    /// In-distribution mass of an outlier-exposure head.
    Oe,
    /// Maximum softmax probability over all outputs of an outlier-exposure head.
    OeMsp,
    /// Zero-shot candidate-label scoring.
    Zshot,
    /// Precomputed one-column score files.
    Scores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Linear,
    Mlp,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Labeled training embeddings.
    #[arg(long)]
    pub train: PathBuf,
    /// Ridge added to the covariance diagonal (default scales with its trace).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// CSV inputs carry a trailing integer label column.
    #[arg(long)]
    pub csv_labels: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// How to turn an input file into confidences.
#[derive(Debug, Args, Serialize)]
pub struct MethodArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Fitted model: a Gaussian (`maha`) or head (`oe`, `oe-msp`) file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Labeled embeddings to fit a Gaussian from (`maha` without `--model`).
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// In-distribution logit columns (`in-mass`); defaults to the file header.
    #[arg(long, value_delimiter = ',')]
    pub in_indices: Option<Vec<usize>>,
    /// In-distribution candidate-label embeddings (`zshot`).
    #[arg(long)]
    pub in_labels: Option<PathBuf>,
    /// Out-of-distribution candidate-label embeddings (`zshot`).
    #[arg(long)]
    pub out_labels: Option<PathBuf>,
    /// Use raw dot products: no normalization, temperature 1 (`zshot`).
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// CSV inputs carry a trailing integer label column.
    #[arg(long)]
    pub csv_labels: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long)]
    pub input: PathBuf,
    /// Also write per-class Mahalanobis distances (`maha`).
    #[arg(long)]
    pub per_class: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    /// In-distribution test inputs.
    #[arg(long = "in")]
    pub in_path: PathBuf,
    /// Out-of-distribution test inputs.
    #[arg(long = "out")]
    pub out_path: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TPR_PERCENT)]
    pub tpr: f64,
    /// Also write roc.csv and pr.csv.
    #[arg(long)]
    pub curves: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainOeArgs {
    /// Labeled in-distribution training embeddings.
    #[arg(long)]
    pub in_train: PathBuf,
    /// Labeled outlier-exposure embeddings.
    #[arg(long)]
    pub oe_train: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Linear)]
    pub kind: Kind,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Map every outlier class to a single extra output.
    #[arg(long)]
    pub collapse: bool,
    /// Keep this many outlier rows per class, sampled with the run seed.
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Fixed oversampling factor for outlier rows.
    #[arg(long)]
    pub oversample: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Validation pair for checkpoint selection by AUROC.
    #[arg(long, requires = "val_out")]
    pub val_in: Option<PathBuf>,
    #[arg(long, requires = "val_in")]
    pub val_out: Option<PathBuf>,
    /// Test pair; when given, a metrics report is written as well.
    #[arg(long, requires = "test_out")]
    pub test_in: Option<PathBuf>,
    #[arg(long, requires = "test_in")]
    pub test_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TPR_PERCENT)]
    pub tpr: f64,
    #[arg(long)]
    pub csv_labels: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ZshotArgs {
    #[arg(long)]
    pub in_labels: PathBuf,
    /// Without out-group labels the score is the in-label maximum softmax probability.
    #[arg(long)]
    pub out_labels: Option<PathBuf>,
    /// Image embeddings to score (in-distribution side when `--out` is given).
    #[arg(long = "in")]
    pub in_path: PathBuf,
    /// Out-of-distribution image embeddings; enables the metrics report.
    #[arg(long = "out")]
    pub out_path: Option<PathBuf>,
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TPR_PERCENT)]
    pub tpr: f64,
    #[arg(long)]
    pub csv_labels: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PcaArgs {
    /// Embedding files, in-distribution first; repeat for each set.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    /// Gaussian model whose score is added as a column.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub csv_labels: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of in-distribution images, one subdirectory per class.
    #[arg(long)]
    pub in_pool: PathBuf,
    /// Directory of out-of-distribution images, one subdirectory per class.
    #[arg(long)]
    pub out_pool: PathBuf,
    #[arg(long, default_value_t = 8787)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Session logs; without it sessions live in memory only.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Static files for the browser UI.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

/// Runs a parsed command; `serve-bench` blocks until the server stops.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => fit(&a),
        Command::Score(a) => score(&a),
        Command::Eval(a) => eval(&a),
        Command::TrainOe(a) => train_oe(&a),
        Command::Zshot(a) => zshot(&a),
        Command::Pca(a) => pca(&a),
        Command::ServeBench(a) => serve_bench(a),
    }
}

fn prepare(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))
}

fn config_of<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn load(path: &Path, csv_labels: bool) -> Result<EmbeddingSet> {
    format::load_embeddings(path, Format::from_path(path, csv_labels))
}

fn ctx(what: &str, path: &Path) -> String {
    format!("{what} {}", path.display())
}

fn fit(a: &FitArgs) -> Result<()> {
    prepare(&a.out_dir)?;
    let train = load(&a.train, a.csv_labels)?;
    let model = fit_gaussian(&train, a.epsilon).context(ctx("fitting", &a.train))?;
    format::save_gaussian(&model, &a.out_dir.join("model.oodgau"))?;
    let mut m = Manifest::new("fit", config_of(a));
    gaussian_summary(&mut m, &model, train.len());
    m.output("model.oodgau");
    m.write(&a.out_dir)
}

fn gaussian_summary(m: &mut Manifest, model: &GaussianModel, n: usize) {
    m.derive("n", n);
    m.derive("dim", model.dim());
    m.derive("classes", model.class_ids());
    m.derive("epsilon", model.epsilon());
    m.derive("ridge_escalations", model.escalations());
}

enum Scorer {
    Maha(GaussianModel),
    Msp { in_indices: Option<Vec<usize>> },
    InMass { in_indices: Option<Vec<usize>> },
    Oe(OeHead),
    OeMsp(OeHead),
    Zshot(CandidateLabels),
    Scores,
}

impl Scorer {
    fn build(a: &MethodArgs, manifest: &mut Manifest) -> Result<Self> {
        let unexpected = |flag: &str| {
            Err(Error::input(format!("--{flag} does not apply to method {:?}", a.method)))
        };
        let zshot_flags = a.in_labels.is_some() || a.out_labels.is_some() || a.raw || a.temperature.is_some();
        if zshot_flags && a.method != Method::Zshot {
            return unexpected("in-labels/--out-labels/--raw/--temperature");
        }
        if a.in_indices.is_some() && !matches!(a.method, Method::InMass | Method::Msp) {
            return unexpected("in-indices");
        }
        if (a.train.is_some() || a.epsilon.is_some()) && a.method != Method::Maha {
            return unexpected("train/--epsilon");
        }
        if a.model.is_some() && !matches!(a.method, Method::Maha | Method::Oe | Method::OeMsp) {
            return unexpected("model");
        }
        Ok(match a.method {
            Method::Maha => {
                let model = match (&a.model, &a.train) {
                    (Some(path), None) => {
                        if a.epsilon.is_some() {
                            return unexpected("epsilon together with --model");
                        }
                        format::load_gaussian(path)?
                    }
                    (None, Some(path)) => {
                        let train = load(path, a.csv_labels)?;
                        let model = fit_gaussian(&train, a.epsilon).context(ctx("fitting", path))?;
                        gaussian_summary(manifest, &model, train.len());
                        model
                    }
                    _ => return Err(Error::input("method maha needs exactly one of --model or --train")),
                };
                Scorer::Maha(model)
            }
            Method::Msp => Scorer::Msp { in_indices: a.in_indices.clone() },
            Method::InMass => Scorer::InMass { in_indices: a.in_indices.clone() },
            Method::Oe | Method::OeMsp => {
                let path = a.model.as_ref().ok_or_else(|| Error::input("method oe needs --model"))?;
                let head = format::load_head(path)?;
                manifest.derive("head_output_width", head.output_width());
                if a.method == Method::Oe {
                    Scorer::Oe(head)
                } else {
                    Scorer::OeMsp(head)
                }
            }
            Method::Zshot => {
                let in_path = a.in_labels.as_ref().ok_or_else(|| Error::input("method zshot needs --in-labels"))?;
                let labels = candidate_labels(in_path, a.out_labels.as_deref(), a.raw, a.temperature, a.csv_labels)?;
                zshot_summary(manifest, &labels);
                Scorer::Zshot(labels)
            }
            Method::Scores => Scorer::Scores,
        })
    }

    /// Name used in reports; MSP over a head's full output is labeled apart
    /// from the head's in-distribution mass.
    fn label(&self) -> &'static str {
        match self {
            Scorer::Maha(_) => "maha",
            Scorer::Msp { .. } => "msp",
            Scorer::InMass { .. } => "in-mass",
            Scorer::Oe(_) => "oe",
            Scorer::OeMsp(_) => "oe-msp-all-outputs",
            Scorer::Zshot(l) if l.mode() == ZshotMode::MspBaseline => "zshot-msp-baseline",
            Scorer::Zshot(_) => "zshot",
            Scorer::Scores => "scores",
        }
    }

    fn score(&self, path: &Path, csv_labels: bool) -> Result<Vec<f64>> {
        let what = ctx("scoring", path);
        match self {
            Scorer::Scores => format::load_scores(path),
            Scorer::Msp { in_indices } | Scorer::InMass { in_indices } => {
                let loaded = format::load_embeddings_with_meta(path, Format::from_path(path, csv_labels))?;
                let mut logits = LogitSet::from_embeddings(&loaded.set).context(what.clone())?;
                if let Some(idx) = in_indices.clone().or(loaded.in_indices) {
                    logits = logits.with_in_indices(idx).context(what.clone())?;
                }
                match self {
                    Scorer::Msp { .. } => score_msp(&logits),
                    _ => score_in_mass(&logits),
                }
                .context(what)
            }
            Scorer::Maha(model) => parallel::score_maha(model, &load(path, csv_labels)?).context(what),
            Scorer::Oe(head) => parallel::score_oe(head, &load(path, csv_labels)?).context(what),
            Scorer::OeMsp(head) => {
                let probs = head.probabilities(&load(path, csv_labels)?).context(what.clone())?;
                let width = head.output_width();
                let set = LogitSet::new(probs, width, (0..width).collect())
                    .context(what.clone())?
                    .with_kind(ValueKind::Probabilities);
                score_msp(&set).context(what)
            }
            Scorer::Zshot(labels) => score_zshot(&load(path, csv_labels)?, labels).context(what),
        }
    }
}

fn candidate_labels(
    in_path: &Path,
    out_path: Option<&Path>,
    raw: bool,
    temperature: Option<f64>,
    csv_labels: bool,
) -> Result<CandidateLabels> {
    let base = if raw { ZshotOptions::raw() } else { ZshotOptions::default() };
    let options = ZshotOptions { temperature: temperature.unwrap_or(base.temperature), ..base };
    let in_text = load(in_path, csv_labels)?;
    let out_text = out_path.map(|p| load(p, csv_labels)).transpose()?;
    CandidateLabels::from_sets(&in_text, out_text.as_ref(), options).context(ctx("candidate labels", in_path))
}

fn zshot_summary(m: &mut Manifest, labels: &CandidateLabels) {
    let o = labels.options();
    m.derive("normalize", o.normalize);
    m.derive("temperature", o.temperature);
    m.derive("in_label_names", labels.in_names());
    m.derive("out_label_names", labels.out_names());
    m.derive(
        "zshot_mode",
        match labels.mode() {
            ZshotMode::InMass => "in-mass",
            ZshotMode::MspBaseline => "msp-baseline",
        },
    );
}

fn score(a: &ScoreArgs) -> Result<()> {
    if a.method.method == Method::Scores {
        return Err(Error::input("method scores only applies to eval"));
    }
    if a.per_class && a.method.method != Method::Maha {
        return Err(Error::input("--per-class applies to method maha only"));
    }
    prepare(&a.out_dir)?;
    let mut m = Manifest::new("score", config_of(a));
    let scorer = Scorer::build(&a.method, &mut m)?;
    m.derive("method", scorer.label());
    let scores = scorer.score(&a.input, a.method.csv_labels)?;
    format::save_scores(&scores, &a.out_dir.join("scores.csv"))?;
    m.output("scores.csv");
    if let (true, Scorer::Maha(model)) = (a.per_class, &scorer) {
        let set = load(&a.input, a.method.csv_labels)?;
        let dist = parallel::maha_per_class(model, &set).context(ctx("scoring", &a.input))?;
        let mut text = String::new();
        let ids: Vec<String> = model.class_ids().iter().map(|c| format!("class_{c}")).collect();
        text.push_str(&ids.join(","));
        text.push('\n');
        for row in dist.chunks(model.num_classes()) {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        write_text(&a.out_dir.join("per_class.csv"), &text)?;
        m.output("per_class.csv");
    }
    m.derive("n", scores.len());
    m.write(&a.out_dir)
}

fn write_report(
    dir: &Path,
    m: &mut Manifest,
    method: &str,
    in_scores: Vec<f64>,
    out_scores: Vec<f64>,
    tpr: f64,
    curves: bool,
) -> Result<MetricsReport> {
    let set = ScoreSet::new(in_scores, out_scores).context("building score set")?;
    let report = MetricsReport::compute(method, &set, tpr)?;
    write_json(&dir.join("report.json"), &report)?;
    m.output("report.json");
    if curves {
        write_curves(dir, &set)?;
        m.output("roc.csv");
        m.output("pr.csv");
    }
    Ok(report)
}

fn eval(a: &EvalArgs) -> Result<()> {
    prepare(&a.out_dir)?;
    let mut m = Manifest::new("eval", config_of(a));
    let scorer = Scorer::build(&a.method, &mut m)?;
    let in_scores = scorer.score(&a.in_path, a.method.csv_labels)?;
    let out_scores = scorer.score(&a.out_path, a.method.csv_labels)?;
    let report = write_report(&a.out_dir, &mut m, scorer.label(), in_scores, out_scores, a.tpr, a.curves)?;
    m.write(&a.out_dir)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

fn oe_config(a: &TrainOeArgs) -> OeConfig {
    let base = match a.kind {
        Kind::Linear => OeConfig::linear(),
        Kind::Mlp => OeConfig::mlp(),
    };
    OeConfig {
        head_kind: match a.kind {
            Kind::Linear => HeadKind::Linear,
            Kind::Mlp => HeadKind::MlpOneHidden,
        },
        hidden_units: a.hidden.unwrap_or(base.hidden_units),
        mode: if a.collapse { PartitionMode::CollapsedSingleClass } else { PartitionMode::LabeledOutliers },
        batch_size: a.batch_size.unwrap_or(base.batch_size),
        learning_rate: a.lr.unwrap_or(base.learning_rate),
        l2_penalty: a.l2.unwrap_or(base.l2_penalty),
        max_steps: a.steps.unwrap_or(base.max_steps),
        seed: a.seed,
        oversample_override: a.oversample,
        eval_every: a.eval_every.unwrap_or(base.eval_every),
    }
}

fn train_oe(a: &TrainOeArgs) -> Result<()> {
    prepare(&a.out_dir)?;
    let mut m = Manifest::new("train-oe", config_of(a));
    let config = oe_config(a);
    let in_train = load(&a.in_train, a.csv_labels)?;
    let mut oe_train = load(&a.oe_train, a.csv_labels)?;
    if let Some(shots) = a.shots {
        let rows = subsample_shots(&oe_train, shots, a.seed).context(ctx("subsampling", &a.oe_train))?;
        oe_train = oe_train.select(&rows).context(ctx("subsampling", &a.oe_train))?;
        m.derive("shot_rows", rows);
    }
    let validation = match (&a.val_in, &a.val_out) {
        (Some(i), Some(o)) => Some((load(i, a.csv_labels)?, load(o, a.csv_labels)?)),
        _ => None,
    };
    let layout = ClassLayout::derive(&in_train, &oe_train, &config).context(ctx("training on", &a.oe_train))?;
    let head = train_oe_head_with_validation(
        &in_train,
        &oe_train,
        &config,
        validation.as_ref().map(|(i, o)| Validation { in_set: i, out_set: o }),
    )
    .context("training outlier-exposure head")?;
    format::save_head(&head, &a.out_dir.join("head.oodhed"))?;
    m.output("head.oodhed");

    let mut log = String::from("step,loss\n");
    for (i, loss) in head.training_log().iter().enumerate() {
        log.push_str(&format!("{},{loss}\n", i + 1));
    }
    write_text(&a.out_dir.join("training_log.csv"), &log)?;
    m.output("training_log.csv");

    m.derive("gamma", layout.gamma);
    m.derive("in_class_ids", &layout.in_class_ids);
    m.derive("out_class_ids", &layout.out_class_ids);
    m.derive("output_width", head.output_width());
    m.derive("partition_mode", format::partition_mode_name(config.mode));
    m.derive("oe_rows", oe_train.len());
    m.derive(
        "checkpoint",
        match head.selected_step() {
            Some(step) => format!("best validation auroc at step {step}"),
            None => format!("final step {}", config.max_steps),
        },
    );
    m.derive("final_loss", head.training_log().last());

    if let (Some(ti), Some(to)) = (&a.test_in, &a.test_out) {
        let in_scores = parallel::score_oe(&head, &load(ti, a.csv_labels)?).context(ctx("scoring", ti))?;
        let out_scores = parallel::score_oe(&head, &load(to, a.csv_labels)?).context(ctx("scoring", to))?;
        write_report(&a.out_dir, &mut m, "oe", in_scores, out_scores, a.tpr, false)?;
    }
    m.write(&a.out_dir)
}

fn zshot(a: &ZshotArgs) -> Result<()> {
    prepare(&a.out_dir)?;
    let mut m = Manifest::new("zshot", config_of(a));
    let labels = candidate_labels(&a.in_labels, a.out_labels.as_deref(), a.raw, a.temperature, a.csv_labels)?;
    zshot_summary(&mut m, &labels);
    let scorer = Scorer::Zshot(labels);
    let in_scores = scorer.score(&a.in_path, a.csv_labels)?;
    format::save_scores(&in_scores, &a.out_dir.join("scores_in.csv"))?;
    m.output("scores_in.csv");
    if let Some(out_path) = &a.out_path {
        let out_scores = scorer.score(out_path, a.csv_labels)?;
        format::save_scores(&out_scores, &a.out_dir.join("scores_out.csv"))?;
        m.output("scores_out.csv");
        write_report(&a.out_dir, &mut m, scorer.label(), in_scores, out_scores, a.tpr, false)?;
    }
    m.write(&a.out_dir)
}

#[derive(Serialize)]
struct PcaReport<'a> {
    components: usize,
    explained_variance: &'a [f64],
    explained_variance_ratio: &'a [f64],
    mean: &'a [f64],
    loadings: Vec<&'a [f64]>,
    rows_per_input: Vec<usize>,
}

fn pca(a: &PcaArgs) -> Result<()> {
    prepare(&a.out_dir)?;
    let mut m = Manifest::new("pca", config_of(a));
    let sets: Vec<EmbeddingSet> = a.inputs.iter().map(|p| load(p, a.csv_labels)).collect::<Result<_>>()?;
    let refs: Vec<&EmbeddingSet> = sets.iter().collect();
    let fitted = Pca::fit(&refs, a.components)?;
    let model = a.model.as_deref().map(format::load_gaussian).transpose()?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = vec!["input".into(), "tag".into(), "row".into()];
    header.extend((1..=a.components).map(|c| format!("pc{c}")));
    if model.is_some() {
        header.push("maha".into());
    }
    let csv_err = |e: csv::Error| Error::input(format!("writing projection: {e}"));
    writer.write_record(&header).map_err(csv_err)?;
    for (input, (set, path)) in sets.iter().zip(&a.inputs).enumerate() {
        let coords = fitted.project(set)?;
        let maha = match &model {
            Some(model) => Some(parallel::score_maha(model, set).context(ctx("scoring", path))?),
            None => None,
        };
        for (row, point) in coords.chunks(a.components).enumerate() {
            let mut record = vec![input.to_string(), set.dataset_tag().to_owned(), row.to_string()];
            record.extend(point.iter().map(f64::to_string));
            if let Some(s) = &maha {
                record.push(s[row].to_string());
            }
            writer.write_record(&record).map_err(csv_err)?;
        }
    }
    let bytes = writer.into_inner().map_err(|e| Error::input(format!("writing projection: {e}")))?;
    let path = a.out_dir.join("projection.csv");
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    m.output("projection.csv");

    let report = PcaReport {
        components: a.components,
        explained_variance: &fitted.explained_variance,
        explained_variance_ratio: &fitted.explained_variance_ratio,
        mean: &fitted.mean,
        loadings: fitted.components.chunks(fitted.dim).collect(),
        rows_per_input: sets.iter().map(EmbeddingSet::len).collect(),
    };
    write_json(&a.out_dir.join("pca.json"), &report)?;
    m.output("pca.json");
    m.write(&a.out_dir)
}

/// Worker-thread cap from `OODKIT_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("OODKIT_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn serve_bench(a: ServeArgs) -> Result<()> {
    let mut runtime = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = thread_cap() {
        runtime.worker_threads(n);
    }
    let runtime = runtime.enable_all().build().map_err(|e| Error::io("tokio runtime", e))?;
    let config = crate::bench::ServeConfig {
        addr: SocketAddr::new(a.host, a.port),
        in_pool: a.in_pool,
        out_pool: a.out_pool,
        data_dir: a.out_dir,
        ui_dir: a.ui_dir,
    };
    runtime.block_on(crate::bench::serve(config))
}
