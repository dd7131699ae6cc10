//! Metrics and the experiment harness: one cell per (model, length,
//! truncation) choice, sweeps over sequence lengths, and results tables in
//! markdown/csv/json.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{predict_svm, train_svm, BaselineError, BowFeaturizer};
use crate::corpus::{filter_untruncated, thousands, DataSplit};
use crate::model::ModelError;
use crate::par;
use crate::plot::Series;
use crate::tokenizer::{encode_corpus, TokenizerError, Vocabulary};
use crate::training::{fine_tune, Hyperparams, TrainError};
use crate::ModelConfig;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions against {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("experiment {spec}: {which} corpus is empty after filtering")]
    EmptyFilteredCorpus { spec: String, which: &'static str },
    #[error("sweep: {0}")]
    BadSweep(String),
    #[error("results csv: {0}")]
    BadResultsCsv(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Counts with same-side (`true`) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(predictions: &[bool], labels: &[bool]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionMatrix,
    /// Names of metrics whose 0/0 case was defined as 0.
    pub flags: Vec<String>,
}

/// Accuracy, positive-class precision/recall/F1. Any 0/0 is defined as 0
/// and flagged. F1 uses `2tp / (2tp + fp + fn)`, which equals the harmonic
/// mean of precision and recall whenever both are defined.
pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    assert!(cm.total() > 0, "metrics need at least one evaluated pair");
    let mut flags = Vec::new();
    let mut ratio = |num: u64, den: u64, name: &str| -> f64 {
        if den == 0 {
            flags.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = (cm.tp + cm.tn) as f64 / cm.total() as f64;
    let precision = ratio(cm.tp, cm.tp + cm.fp, "precision");
    let recall = ratio(cm.tp, cm.tp + cm.fn_, "recall");
    let f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_, "f1");
    MetricsReport { accuracy, precision, recall, f1, counts: *cm, flags }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Within,
    Cross,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Within => "within",
            SplitMode::Cross => "cross",
        })
    }
}

impl std::str::FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "within" => Ok(SplitMode::Within),
            "cross" => Ok(SplitMode::Cross),
            other => Err(format!("unknown split mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "base-mini")]
    BaseMini,
    #[serde(rename = "large-mini")]
    LargeMini,
    #[serde(rename = "svm")]
    Svm,
}

impl ModelKind {
    pub fn is_svm(&self) -> bool {
        matches!(self, ModelKind::Svm)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::BaseMini => "base-mini",
            ModelKind::LargeMini => "large-mini",
            ModelKind::Svm => "svm",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base-mini" => Ok(ModelKind::BaseMini),
            "large-mini" => Ok(ModelKind::LargeMini),
            "svm" => Ok(ModelKind::Svm),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

/// One cell of the experiment matrix. `trunc_*` true means over-length
/// pairs are truncated; false means they are filtered out ("no trunc").
/// The SVM ignores `max_seq_len` and both flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub split_mode: SplitMode,
    pub model_kind: ModelKind,
    pub max_seq_len: usize,
    pub trunc_train: bool,
    pub trunc_test: bool,
    pub seed: u64,
}

impl fmt::Display for ExperimentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/len{}/trunc_train={}/trunc_test={}/seed{}",
            self.split_mode,
            self.model_kind,
            self.max_seq_len,
            self.trunc_train,
            self.trunc_test,
            self.seed
        )
    }
}

/// Knobs shared by every cell of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub hyper: Hyperparams,
    pub svm_lambda: f64,
    pub svm_epochs: usize,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            hyper: Hyperparams::default(),
            svm_lambda: 1e-4,
            svm_epochs: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub spec: ExperimentSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Option<MetricsReport>,
    pub runtime_secs: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultsRow>,
}

impl ResultsTable {
    pub fn has_errors(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
    }
}

fn run_cell(
    spec: &ExperimentSpec,
    data: &DataSplit,
    vocab: &Vocabulary,
    params: &ExperimentParams,
) -> Result<(usize, usize, MetricsReport), EvalError> {
    if spec.model_kind.is_svm() {
        // The baseline sees the raw pair text; length caps do not apply.
        if data.train.is_empty() {
            return Err(EvalError::EmptyFilteredCorpus { spec: spec.to_string(), which: "train" });
        }
        if data.test.is_empty() {
            return Err(EvalError::EmptyFilteredCorpus { spec: spec.to_string(), which: "test" });
        }
        let featurizer = BowFeaturizer::new(vocab);
        let model = train_svm(
            &data.train,
            &featurizer,
            params.svm_lambda,
            params.svm_epochs,
            spec.seed,
        )?;
        let predictions =
            par::map_ordered(&data.test.records, |rec| predict_svm(&model, rec, &featurizer));
        let labels: Vec<bool> = data.test.records.iter().map(|r| r.is_same_stance).collect();
        let cm = confusion(&predictions, &labels)?;
        return Ok((data.train.len(), data.test.len(), metrics(&cm)));
    }

    let train_corpus = if spec.trunc_train {
        data.train.clone()
    } else {
        filter_untruncated(&data.train, vocab, spec.max_seq_len)
    };
    let test_corpus = if spec.trunc_test {
        data.test.clone()
    } else {
        filter_untruncated(&data.test, vocab, spec.max_seq_len)
    };
    if train_corpus.is_empty() {
        return Err(EvalError::EmptyFilteredCorpus { spec: spec.to_string(), which: "train" });
    }
    if test_corpus.is_empty() {
        return Err(EvalError::EmptyFilteredCorpus { spec: spec.to_string(), which: "test" });
    }

    let config = match spec.model_kind {
        ModelKind::BaseMini => ModelConfig::base_mini(vocab.len(), spec.max_seq_len),
        ModelKind::LargeMini => ModelConfig::large_mini(vocab.len(), spec.max_seq_len),
        ModelKind::Svm => unreachable!(),
    };
    let hp = Hyperparams { seed: spec.seed, ..params.hyper.clone() };
    let (model, _report) = fine_tune(&config, vocab, &train_corpus, &hp, spec.max_seq_len)?;

    let encoded_test = encode_corpus(&test_corpus, vocab, spec.max_seq_len)?;
    let predictions = crate::model::predict(&model, &encoded_test)?;
    let labels: Vec<bool> = test_corpus.records.iter().map(|r| r.is_same_stance).collect();
    let cm = confusion(&predictions, &labels)?;
    Ok((train_corpus.len(), test_corpus.len(), metrics(&cm)))
}

/// Run one experiment cell: filter per the truncation flags, train the
/// specified model, evaluate on the test side.
pub fn run_experiment(
    spec: &ExperimentSpec,
    data: &DataSplit,
    vocab: &Vocabulary,
    params: &ExperimentParams,
) -> Result<ResultsRow, EvalError> {
    let start = Instant::now();
    let (n_train, n_test, report) = run_cell(spec, data, vocab, params)?;
    Ok(ResultsRow {
        spec: *spec,
        n_train,
        n_test,
        metrics: Some(report),
        runtime_secs: start.elapsed().as_secs_f64(),
        error: None,
    })
}

/// Run the (model x length) matrix with truncation on both sides. Rows come
/// back in spec order regardless of scheduling; a failed cell becomes a row
/// with its error recorded instead of aborting the sweep.
pub fn run_sweep(
    split_mode: SplitMode,
    model_kinds: &[ModelKind],
    lengths: &[usize],
    data: &DataSplit,
    vocab: &Vocabulary,
    params: &ExperimentParams,
) -> Result<ResultsTable, EvalError> {
    run_matrix(split_mode, model_kinds, lengths, true, true, data, vocab, params)
}

/// [`run_sweep`] with explicit truncation flags for every cell.
#[allow(clippy::too_many_arguments)]
pub fn run_matrix(
    split_mode: SplitMode,
    model_kinds: &[ModelKind],
    lengths: &[usize],
    trunc_train: bool,
    trunc_test: bool,
    data: &DataSplit,
    vocab: &Vocabulary,
    params: &ExperimentParams,
) -> Result<ResultsTable, EvalError> {
    if lengths.is_empty() {
        return Err(EvalError::BadSweep("no sequence lengths given".into()));
    }
    if lengths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::BadSweep(format!(
            "lengths must be strictly ascending, got {lengths:?}"
        )));
    }
    let mut specs = Vec::new();
    for &kind in model_kinds {
        for &len in lengths {
            specs.push(ExperimentSpec {
                split_mode,
                model_kind: kind,
                max_seq_len: len,
                trunc_train,
                trunc_test,
                seed: params.hyper.seed,
            });
        }
    }
    let rows = par::map_ordered(&specs, |spec| {
        let start = Instant::now();
        match run_cell(spec, data, vocab, params) {
            Ok((n_train, n_test, report)) => ResultsRow {
                spec: *spec,
                n_train,
                n_test,
                metrics: Some(report),
                runtime_secs: start.elapsed().as_secs_f64(),
                error: None,
            },
            Err(err) => ResultsRow {
                spec: *spec,
                n_train: 0,
                n_test: 0,
                metrics: None,
                runtime_secs: start.elapsed().as_secs_f64(),
                error: Some(err.to_string()),
            },
        }
    });
    Ok(ResultsTable { rows })
}

/// Accuracy-vs-length series per model kind, for the sweep line plot.
pub fn sweep_accuracy_series(table: &ResultsTable) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    for row in &table.rows {
        let Some(metrics) = &row.metrics else { continue };
        let name = row.spec.model_kind.to_string();
        let point = (row.spec.max_seq_len as f64, metrics.accuracy);
        match series.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push(point),
            None => series.push(Series::new(name, vec![point])),
        }
    }
    series
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
    Json,
}

pub const RESULTS_CSV_HEADER: &str = "No-Trunc-Train,No-Trunc-Test,Model,#Train,#Test,Acc,F1";

/// The seven table columns of one row, exactly as they appear in the
/// csv. `None` flags render as "-" (not applicable, SVM rows).
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub no_trunc_train: Option<bool>,
    pub no_trunc_test: Option<bool>,
    pub model: String,
    pub n_train: u64,
    pub n_test: u64,
    pub acc: String,
    pub f1: String,
}

fn flag_str(flag: Option<bool>) -> &'static str {
    match flag {
        Some(true) => "true",
        Some(false) => "false",
        None => "-",
    }
}

fn to_csv_rows(table: &ResultsTable) -> Vec<CsvRow> {
    table
        .rows
        .iter()
        .map(|row| {
            let (ntt, ntv) = if row.spec.model_kind.is_svm() {
                (None, None)
            } else {
                (Some(!row.spec.trunc_train), Some(!row.spec.trunc_test))
            };
            let (acc, f1) = match &row.metrics {
                Some(m) => (format!("{:.4}", m.accuracy), format!("{:.4}", m.f1)),
                None => ("failed".into(), "failed".into()),
            };
            CsvRow {
                no_trunc_train: ntt,
                no_trunc_test: ntv,
                model: row.spec.model_kind.to_string(),
                n_train: row.n_train as u64,
                n_test: row.n_test as u64,
                acc,
                f1,
            }
        })
        .collect()
}

/// Serialize parsed csv rows back to bytes; `emit(parse(x)) == x`.
pub fn emit_csv_rows(rows: &[CsvRow]) -> Vec<u8> {
    let mut out = String::from(RESULTS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            flag_str(r.no_trunc_train),
            flag_str(r.no_trunc_test),
            r.model,
            r.n_train,
            r.n_test,
            r.acc,
            r.f1
        ));
    }
    out.into_bytes()
}

pub fn parse_results_csv(bytes: &[u8]) -> Result<Vec<CsvRow>, EvalError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| EvalError::BadResultsCsv(e.to_string()))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| EvalError::BadResultsCsv("empty file".into()))?;
    if header != RESULTS_CSV_HEADER {
        return Err(EvalError::BadResultsCsv(format!("unexpected header `{header}`")));
    }
    let parse_flag = |s: &str| -> Result<Option<bool>, EvalError> {
        match s {
            "true" => Ok(Some(true)),
            "false" => Ok(Some(false)),
            "-" => Ok(None),
            other => Err(EvalError::BadResultsCsv(format!("bad flag `{other}`"))),
        }
    };
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(EvalError::BadResultsCsv(format!(
                "expected 7 fields, got {} in `{line}`",
                fields.len()
            )));
        }
        let count = |s: &str| -> Result<u64, EvalError> {
            s.parse()
                .map_err(|_| EvalError::BadResultsCsv(format!("bad count `{s}`")))
        };
        rows.push(CsvRow {
            no_trunc_train: parse_flag(fields[0])?,
            no_trunc_test: parse_flag(fields[1])?,
            model: fields[2].to_string(),
            n_train: count(fields[3])?,
            n_test: count(fields[4])?,
            acc: fields[5].to_string(),
            f1: fields[6].to_string(),
        });
    }
    Ok(rows)
}

fn emit_markdown(table: &ResultsTable) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("| No-Trunc-Train | No-Trunc-Test | Model | #Train | #Test | Acc | F1 |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for r in to_csv_rows(table) {
        let dot = |flag: Option<bool>| match flag {
            Some(true) => "\u{25cf}",
            Some(false) => "",
            None => "-",
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            dot(r.no_trunc_train),
            dot(r.no_trunc_test),
            r.model,
            thousands(r.n_train),
            thousands(r.n_test),
            r.acc,
            r.f1
        ));
    }
    out.into_bytes()
}

/// Emit the table with the fixed column layout (Acc/F1 to 4 decimals).
pub fn emit_results_table(table: &ResultsTable, format: TableFormat) -> Vec<u8> {
    match format {
        TableFormat::Csv => emit_csv_rows(&to_csv_rows(table)),
        TableFormat::Markdown => emit_markdown(table),
        TableFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(table).expect("table serializes");
            bytes.push(b'\n');
            bytes
        }
    }
}
