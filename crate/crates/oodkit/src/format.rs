//! On-disk formats.
//!
//! Binary containers share one layout:
//!
//! ```text
//! magic      8 bytes   "OODEMB01" | "OODGAU01" | "OODHED01"
//! header_len u32 LE    length of the JSON header in bytes
//! header     UTF-8 JSON
//! payload    little-endian numbers, layout given by the header
//! ```
//!
//! Embedding payloads are `n*d` `f32` values row-major followed, when
//! `has_labels` is set, by `n` `u32` labels. Gaussian models store `f64`
//! means (`k*d`) then the `d*d` lower Cholesky factor. Heads store their flat
//! `f64` parameter vector followed by the per-step training loss log.
//!
//! The CSV variant has one sample per line, no header row, `.` decimals and
//! an optional trailing integer label column.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use oodkit_core::oe::{HeadKind, OeConfig, OeHead};
use oodkit_core::{ClassPartition, EmbeddingSet, GaussianModel, PartitionMode};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBEDDINGS_MAGIC: &[u8; 8] = b"OODEMB01";
pub const GAUSSIAN_MAGIC: &[u8; 8] = b"OODGAU01";
pub const HEAD_MAGIC: &[u8; 8] = b"OODHED01";

const PREFIX_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("expected magic {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("file ends at byte {len}, before the {what} that starts at byte {offset}")]
    Truncated { what: &'static str, offset: usize, len: usize },
    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("payload at byte {offset} holds {found} bytes, header implies {expected}")]
    PayloadSize { offset: usize, expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col} (byte {offset})")]
    NonFinite { row: usize, col: usize, offset: usize },
    #[error("label {label} at row {row} (byte {offset}) is out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: u32, classes: usize, offset: usize },
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("refusing to write an empty set")]
    EmptySet,
    #[error("{0}")]
    Invalid(String),
}

/// How an embedding file is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    /// CSV, optionally with a trailing integer label column.
    Csv { labels: bool },
}

impl Format {
    /// `.csv` files are CSV; everything else is the binary container.
    pub fn from_path(path: &Path, csv_labels: bool) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv { labels: csv_labels },
            _ => Format::Binary,
        }
    }
}

/// JSON header of an embedding container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub n: usize,
    pub d: usize,
    pub has_labels: bool,
    #[serde(default)]
    pub dataset_tag: String,
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
    /// In-distribution output columns when the payload holds logits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_indices: Option<Vec<usize>>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Splits a container into its JSON header and payload.
fn split_container<'a, H: serde::de::DeserializeOwned>(
    bytes: &'a [u8],
    magic: &[u8; 8],
) -> Result<(H, &'a [u8], usize), FormatError> {
    if bytes.len() < PREFIX_LEN {
        return Err(FormatError::Truncated { what: "container prefix", offset: 0, len: bytes.len() });
    }
    if &bytes[..8] != magic {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
        });
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload_start = PREFIX_LEN + header_len;
    if bytes.len() < payload_start {
        return Err(FormatError::Truncated { what: "header", offset: PREFIX_LEN, len: bytes.len() });
    }
    let header = serde_json::from_slice(&bytes[PREFIX_LEN..payload_start]).map_err(|e| {
        FormatError::MalformedHeader { offset: PREFIX_LEN, reason: e.to_string() }
    })?;
    Ok((header, &bytes[payload_start..], payload_start))
}

fn container<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(PREFIX_LEN + json.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    out
}

fn expect_payload(payload: &[u8], offset: usize, expected: usize) -> Result<(), FormatError> {
    if payload.len() != expected {
        return Err(FormatError::PayloadSize { offset, expected, found: payload.len() });
    }
    Ok(())
}

fn f64s(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Decodes an embedding container from memory.
pub fn decode_embeddings(bytes: &[u8]) -> Result<(EmbeddingSet, EmbeddingHeader), FormatError> {
    let (header, payload, offset): (EmbeddingHeader, _, _) =
        split_container(bytes, EMBEDDINGS_MAGIC)?;
    if header.n == 0 || header.d == 0 {
        return Err(FormatError::MalformedHeader {
            offset: PREFIX_LEN,
            reason: format!("n and d must be positive (n={}, d={})", header.n, header.d),
        });
    }
    let values = header
        .n
        .checked_mul(header.d)
        .ok_or_else(|| FormatError::MalformedHeader { offset: PREFIX_LEN, reason: "n*d overflows".into() })?;
    let label_bytes = if header.has_labels { header.n * 4 } else { 0 };
    expect_payload(payload, offset, values * 4 + label_bytes)?;

    let mut data = Vec::with_capacity(values);
    for (i, chunk) in payload[..values * 4].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(FormatError::NonFinite {
                row: i / header.d,
                col: i % header.d,
                offset: offset + i * 4,
            });
        }
        data.push(v);
    }
    let mut set = EmbeddingSet::new(data, header.d)
        .map_err(|e| FormatError::Invalid(e.to_string()))?
        .with_tag(header.dataset_tag.clone());
    if header.has_labels {
        let label_offset = offset + values * 4;
        let labels: Vec<u32> = payload[values * 4..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(names) = &header.class_names {
            if let Some((row, &label)) =
                labels.iter().enumerate().find(|(_, &l)| l as usize >= names.len())
            {
                return Err(FormatError::LabelOutOfRange {
                    row,
                    label,
                    classes: names.len(),
                    offset: label_offset + row * 4,
                });
            }
        }
        set = set.with_labels(labels).map_err(|e| FormatError::Invalid(e.to_string()))?;
    }
    if let Some(names) = &header.class_names {
        set = set.with_class_names(names.clone()).map_err(|e| FormatError::Invalid(e.to_string()))?;
    }
    Ok((set, header))
}

/// Encodes an embedding set (optionally tagging logit in-indices).
pub fn encode_embeddings(set: &EmbeddingSet, in_indices: Option<&[usize]>) -> Result<Vec<u8>, FormatError> {
    if set.is_empty() {
        return Err(FormatError::EmptySet);
    }
    let header = EmbeddingHeader {
        n: set.len(),
        d: set.dim(),
        has_labels: set.labels().is_some(),
        dataset_tag: set.dataset_tag().to_owned(),
        class_names: set.class_names().map(<[String]>::to_vec),
        in_indices: in_indices.map(<[usize]>::to_vec),
    };
    let mut payload = Vec::with_capacity(set.data().len() * 4 + set.len() * 4);
    for v in set.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    for l in set.labels().unwrap_or_default() {
        payload.extend_from_slice(&l.to_le_bytes());
    }
    Ok(container(EMBEDDINGS_MAGIC, &header, &payload))
}

fn parse_csv(text: &[u8], labels: bool, tag: &str) -> Result<EmbeddingSet, FormatError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text);
    let mut data = Vec::new();
    let mut label_col = Vec::new();
    let mut dim = None;
    for (row, record) in reader.records().enumerate() {
        let line = row + 1;
        let record = record.map_err(|e| FormatError::Csv { line, reason: e.to_string() })?;
        let fields = record.len();
        let values = if labels { fields.saturating_sub(1) } else { fields };
        if values == 0 {
            return Err(FormatError::Csv { line, reason: "no value columns".into() });
        }
        match dim {
            None => dim = Some(values),
            Some(d) if d != values => {
                return Err(FormatError::Csv {
                    line,
                    reason: format!("expected {d} value columns, found {values}"),
                })
            }
            _ => {}
        }
        for (col, field) in record.iter().take(values).enumerate() {
            let v: f32 = field.trim().parse().map_err(|_| FormatError::Csv {
                line,
                reason: format!("column {} is not a number: {field:?}", col + 1),
            })?;
            if !v.is_finite() {
                return Err(FormatError::NonFinite { row, col, offset: line });
            }
            data.push(v);
        }
        if labels {
            let field = record.get(values).unwrap_or_default().trim();
            let l: u32 = field.parse().map_err(|_| FormatError::Csv {
                line,
                reason: format!("label {field:?} is not a non-negative integer"),
            })?;
            label_col.push(l);
        }
    }
    let dim = dim.ok_or(FormatError::Csv { line: 0, reason: "no rows".into() })?;
    let mut set = EmbeddingSet::new(data, dim)
        .map_err(|e| FormatError::Invalid(e.to_string()))?
        .with_tag(tag);
    if labels {
        set = set.with_labels(label_col).map_err(|e| FormatError::Invalid(e.to_string()))?;
    }
    Ok(set)
}

fn csv_bytes(set: &EmbeddingSet) -> Vec<u8> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let labels = set.labels();
    for (i, row) in set.rows().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            fields.push(l[i].to_string());
        }
        writer.write_record(&fields).expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

/// An embedding file together with its optional logit metadata.
#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub set: EmbeddingSet,
    pub in_indices: Option<Vec<usize>>,
}

pub fn load_embeddings_with_meta(path: &Path, format: Format) -> Result<LoadedEmbeddings> {
    let bytes = read_file(path)?;
    match format {
        Format::Binary => {
            let (set, header) = decode_embeddings(&bytes).map_err(|e| Error::format(path, e))?;
            Ok(LoadedEmbeddings { set, in_indices: header.in_indices })
        }
        Format::Csv { labels } => {
            let tag = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let set = parse_csv(&bytes, labels, tag).map_err(|e| Error::format(path, e))?;
            Ok(LoadedEmbeddings { set, in_indices: None })
        }
    }
}

/// Loads and validates an embedding file; row order is preserved.
pub fn load_embeddings(path: &Path, format: Format) -> Result<EmbeddingSet> {
    load_embeddings_with_meta(path, format).map(|l| l.set)
}

pub fn save_embeddings(set: &EmbeddingSet, path: &Path, format: Format) -> Result<()> {
    if set.is_empty() {
        return Err(Error::format(path, FormatError::EmptySet));
    }
    let bytes = match format {
        Format::Binary => encode_embeddings(set, None).map_err(|e| Error::format(path, e))?,
        Format::Csv { .. } => csv_bytes(set),
    };
    write_file(path, &bytes)
}

/// Reads a one-column score file: CSV (first column, parsed as `f64`) or a
/// `d = 1` embedding container.
pub fn load_scores(path: &Path) -> Result<Vec<f64>> {
    match Format::from_path(path, false) {
        Format::Csv { .. } => {
            let text = read_file(path)?;
            let mut reader =
                csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(&text[..]);
            let mut out = Vec::new();
            for (row, record) in reader.records().enumerate() {
                let line = row + 1;
                let record = record
                    .map_err(|e| Error::format(path, FormatError::Csv { line, reason: e.to_string() }))?;
                let field = record.get(0).unwrap_or_default().trim();
                let v: f64 = field.parse().map_err(|_| {
                    Error::format(path, FormatError::Csv { line, reason: format!("not a number: {field:?}") })
                })?;
                if !v.is_finite() {
                    return Err(Error::format(path, FormatError::NonFinite { row, col: 0, offset: line }));
                }
                out.push(v);
            }
            Ok(out)
        }
        Format::Binary => {
            let set = load_embeddings(path, Format::Binary)?;
            if set.dim() != 1 {
                return Err(Error::input(format!(
                    "{}: score files must have one column, found {}",
                    path.display(),
                    set.dim()
                )));
            }
            Ok(set.data().iter().map(|&v| f64::from(v)).collect())
        }
    }
}

/// Writes one score per line.
pub fn save_scores(scores: &[f64], path: &Path) -> Result<()> {
    let mut text = String::with_capacity(scores.len() * 20);
    for s in scores {
        text.push_str(&s.to_string());
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
struct GaussianHeader {
    kind: String,
    k: usize,
    d: usize,
    epsilon: f64,
    escalations: u32,
    class_ids: Vec<u32>,
    counts: Vec<usize>,
}

pub fn encode_gaussian(model: &GaussianModel) -> Vec<u8> {
    let header = GaussianHeader {
        kind: "OODGAU01".into(),
        k: model.num_classes(),
        d: model.dim(),
        epsilon: model.epsilon(),
        escalations: model.escalations(),
        class_ids: model.class_ids().to_vec(),
        counts: model.counts().to_vec(),
    };
    let mut payload = Vec::with_capacity((model.means().len() + model.chol().len()) * 8);
    push_f64s(&mut payload, model.means());
    push_f64s(&mut payload, model.chol());
    container(GAUSSIAN_MAGIC, &header, &payload)
}

pub fn decode_gaussian(bytes: &[u8]) -> Result<GaussianModel, FormatError> {
    let (header, payload, offset): (GaussianHeader, _, _) = split_container(bytes, GAUSSIAN_MAGIC)?;
    let (k, d) = (header.k, header.d);
    if header.class_ids.len() != k || header.counts.len() != k {
        return Err(FormatError::MalformedHeader {
            offset: PREFIX_LEN,
            reason: format!("class_ids/counts must have k={k} entries"),
        });
    }
    expect_payload(payload, offset, (k * d + d * d) * 8)?;
    let means = f64s(&payload[..k * d * 8]);
    let chol = f64s(&payload[k * d * 8..]);
    GaussianModel::from_parts(d, header.class_ids, header.counts, means, chol, header.epsilon, header.escalations)
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn save_gaussian(model: &GaussianModel, path: &Path) -> Result<()> {
    write_file(path, &encode_gaussian(model))
}

pub fn load_gaussian(path: &Path) -> Result<GaussianModel> {
    decode_gaussian(&read_file(path)?).map_err(|e| Error::format(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct PartitionRecord {
    k_in: usize,
    o_out: usize,
    mode: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigRecord {
    head_kind: String,
    hidden_units: usize,
    batch_size: usize,
    learning_rate: f64,
    l2_penalty: f64,
    max_steps: usize,
    seed: u64,
    oversample_override: Option<f64>,
    eval_every: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerRecord {
    inputs: usize,
    outputs: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeadHeader {
    kind: String,
    input_dim: usize,
    output_width: usize,
    partition: PartitionRecord,
    in_class_ids: Vec<u32>,
    out_class_ids: Vec<u32>,
    layers: Vec<LayerRecord>,
    config: ConfigRecord,
    num_params: usize,
    log_len: usize,
    selected_step: Option<usize>,
}

pub fn head_kind_name(kind: HeadKind) -> &'static str {
    match kind {
        HeadKind::Linear => "linear",
        HeadKind::MlpOneHidden => "mlp_one_hidden",
    }
}

pub fn partition_mode_name(mode: PartitionMode) -> &'static str {
    match mode {
        PartitionMode::LabeledOutliers => "labeled_outliers",
        PartitionMode::CollapsedSingleClass => "collapsed_single_class",
    }
}

pub fn encode_head(head: &OeHead) -> Vec<u8> {
    let c = head.config();
    let p = head.partition();
    let header = HeadHeader {
        kind: "OODHED01".into(),
        input_dim: head.input_dim(),
        output_width: head.output_width(),
        partition: PartitionRecord {
            k_in: p.k_in,
            o_out: p.o_out,
            mode: partition_mode_name(p.mode).into(),
        },
        in_class_ids: head.in_class_ids().to_vec(),
        out_class_ids: head.out_class_ids().to_vec(),
        layers: head.layers().iter().map(|l| LayerRecord { inputs: l.inputs, outputs: l.outputs }).collect(),
        config: ConfigRecord {
            head_kind: head_kind_name(c.head_kind).into(),
            hidden_units: c.hidden_units,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            l2_penalty: c.l2_penalty,
            max_steps: c.max_steps,
            seed: c.seed,
            oversample_override: c.oversample_override,
            eval_every: c.eval_every,
        },
        num_params: head.params().len(),
        log_len: head.training_log().len(),
        selected_step: head.selected_step(),
    };
    let mut payload = Vec::with_capacity((header.num_params + header.log_len) * 8);
    push_f64s(&mut payload, head.params());
    push_f64s(&mut payload, head.training_log());
    container(HEAD_MAGIC, &header, &payload)
}

pub fn decode_head(bytes: &[u8]) -> Result<OeHead, FormatError> {
    let (header, payload, offset): (HeadHeader, _, _) = split_container(bytes, HEAD_MAGIC)?;
    let bad = |reason: String| FormatError::MalformedHeader { offset: PREFIX_LEN, reason };
    let head_kind = match header.config.head_kind.as_str() {
        "linear" => HeadKind::Linear,
        "mlp_one_hidden" => HeadKind::MlpOneHidden,
        other => return Err(bad(format!("unknown head kind {other:?}"))),
    };
    let mode = match header.partition.mode.as_str() {
        "labeled_outliers" => PartitionMode::LabeledOutliers,
        "collapsed_single_class" => PartitionMode::CollapsedSingleClass,
        other => return Err(bad(format!("unknown partition mode {other:?}"))),
    };
    let c = header.config;
    let config = OeConfig {
        head_kind,
        hidden_units: c.hidden_units,
        mode,
        batch_size: c.batch_size,
        learning_rate: c.learning_rate,
        l2_penalty: c.l2_penalty,
        max_steps: c.max_steps,
        seed: c.seed,
        oversample_override: c.oversample_override,
        eval_every: c.eval_every,
    };
    let partition = ClassPartition::new(header.partition.k_in, header.partition.o_out, mode)
        .map_err(|e| bad(e.to_string()))?;
    expect_payload(payload, offset, (header.num_params + header.log_len) * 8)?;
    let params = f64s(&payload[..header.num_params * 8]);
    let log = f64s(&payload[header.num_params * 8..]);
    let head = OeHead::from_parts(
        config,
        partition,
        header.input_dim,
        header.in_class_ids,
        header.out_class_ids,
        params,
        log,
        header.selected_step,
    )
    .map_err(|e| FormatError::Invalid(e.to_string()))?;
    if head.output_width() != header.output_width {
        return Err(bad(format!(
            "output_width {} does not match partition width {}",
            header.output_width,
            head.output_width()
        )));
    }
    Ok(head)
}

pub fn save_head(head: &OeHead, path: &Path) -> Result<()> {
    write_file(path, &encode_head(head))
}

pub fn load_head(path: &Path) -> Result<OeHead> {
    decode_head(&read_file(path)?).map_err(|e| Error::format(path, e))
}

/// `dir/name`, for output files.
pub fn output_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
