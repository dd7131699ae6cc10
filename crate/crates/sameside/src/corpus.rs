//! Argument-pair corpora in the shared-task schema: parsing (csv/jsonl),
//! validation, class statistics, seeded train/test splitting, and the
//! length-based filtering and histograms used by the truncation experiments.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;
use crate::tokenizer::{encoded_pair_len, Vocabulary};

/// The seven instance fields, in canonical column order.
pub const FIELD_NAMES: [&str; 7] = [
    "id",
    "topic",
    "argument1",
    "argument1_id",
    "argument2",
    "argument2_id",
    "is_same_stance",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("schema error: unexpected column `{0}`")]
    UnexpectedColumn(String),
    #[error("duplicate id `{id}` at rows {first_row} and {second_row}")]
    DuplicateId {
        id: String,
        first_row: u64,
        second_row: u64,
    },
    #[error("row {row}: cannot parse is_same_stance from `{value}`")]
    BadLabel { row: u64, value: String },
    #[error("row {row}: field `{field}` is empty")]
    EmptyField { row: u64, field: &'static str },
    #[error("row {row}: {message}")]
    BadRow { row: u64, message: String },
    #[error("split fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("empty corpus: {0}")]
    EmptyCorpus(&'static str),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One labeled pair of arguments (one dataset instance).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentPairRecord {
    pub id: String,
    pub topic: String,
    pub argument1: String,
    pub argument1_id: String,
    pub argument2: String,
    pub argument2_id: String,
    pub is_same_stance: bool,
}

/// An ordered collection of records; order is file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub records: Vec<ArgumentPairRecord>,
    pub source_name: String,
}

impl Corpus {
    pub fn new(records: Vec<ArgumentPairRecord>, source_name: impl Into<String>) -> Self {
        Corpus { records, source_name: source_name.into() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct topics over all records.
    pub fn topics(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.topic.clone()).collect()
    }
}

/// Declared input format for [`parse_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(CorpusFormat::Csv),
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

/// A seeded 90/10-style partition of a corpus.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: Corpus,
    pub test: Corpus,
    pub fraction: f64,
    pub seed: u64,
}

/// Per-topic same-side / different-side counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub same_side: u64,
    pub different_side: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStatistics {
    pub per_topic: BTreeMap<String, ClassCounts>,
}

impl ClassStatistics {
    pub fn overall(&self) -> ClassCounts {
        let mut acc = ClassCounts { same_side: 0, different_side: 0, total: 0 };
        for c in self.per_topic.values() {
            acc.same_side += c.same_side;
            acc.different_side += c.different_side;
            acc.total += c.total;
        }
        acc
    }

    /// Markdown table shaped like the per-topic overview tables: one column
    /// per topic, rows Same Side / Different Side / Total.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| class |");
        for topic in self.per_topic.keys() {
            out.push_str(&format!(" topic: {topic} |"));
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in self.per_topic.keys() {
            out.push_str("---|");
        }
        out.push('\n');
        for (label, pick) in [
            ("Same Side", 0usize),
            ("Different Side", 1),
            ("Total", 2),
        ] {
            out.push_str(&format!("| {label} |"));
            for counts in self.per_topic.values() {
                let v = match pick {
                    0 => counts.same_side,
                    1 => counts.different_side,
                    _ => counts.total,
                };
                out.push_str(&format!(" {} |", thousands(v)));
            }
            out.push('\n');
        }
        out
    }
}

/// Histogram of encoded pair lengths plus cumulative fractions at the
/// requested thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub bucket_width: usize,
    /// bucket index -> number of pairs (only non-empty buckets).
    pub buckets: BTreeMap<usize, usize>,
    pub total_pairs: usize,
    /// threshold -> fraction of pairs with encoded length <= threshold.
    pub fraction_leq: BTreeMap<usize, f64>,
}

impl LengthHistogram {
    /// csv body `bucket_start,count`, buckets in ascending order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket_start,count\n");
        for (idx, count) in &self.buckets {
            out.push_str(&format!("{},{}\n", idx * self.bucket_width, count));
        }
        out
    }
}

/// Group digits by thousands: 63903 -> "63,903".
pub(crate) fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    let offset = digits.len() % 3;
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (i + 3 - offset) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Strip at most one trailing newline (`\n` or `\r\n`) from a text field.
fn trim_one_newline(s: &str) -> &str {
    s.strip_suffix("\r\n")
        .or_else(|| s.strip_suffix('\n'))
        .unwrap_or(s)
}

fn parse_label(raw: &str, row: u64) -> Result<bool, CorpusError> {
    if raw.eq_ignore_ascii_case("true") {
        Ok(true)
    } else if raw.eq_ignore_ascii_case("false") {
        Ok(false)
    } else {
        Err(CorpusError::BadLabel { row, value: raw.to_string() })
    }
}

fn validate_record(rec: &ArgumentPairRecord, row: u64) -> Result<(), CorpusError> {
    if rec.id.trim().is_empty() {
        return Err(CorpusError::EmptyField { row, field: "id" });
    }
    if rec.argument1.trim().is_empty() {
        return Err(CorpusError::EmptyField { row, field: "argument1" });
    }
    if rec.argument2.trim().is_empty() {
        return Err(CorpusError::EmptyField { row, field: "argument2" });
    }
    Ok(())
}

/// Parse a corpus from a byte stream in the declared format.
///
/// Text fields are preserved byte-exactly apart from a single
/// trailing-newline trim; `is_same_stance` accepts true/false in any case.
pub fn parse_corpus<R: Read>(
    reader: R,
    format: CorpusFormat,
    source_name: &str,
) -> Result<Corpus, CorpusError> {
    match format {
        CorpusFormat::Csv => parse_csv(reader, source_name),
        CorpusFormat::Jsonl => parse_jsonl(reader, source_name),
    }
}

fn parse_csv<R: Read>(reader: R, source_name: &str) -> Result<Corpus, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let expected: BTreeSet<&str> = FIELD_NAMES.iter().copied().collect();
    let seen: BTreeSet<&str> = headers.iter().collect();
    for name in &expected {
        if !seen.contains(name) {
            return Err(CorpusError::MissingColumn(name.to_string()));
        }
    }
    for name in &seen {
        if !expected.contains(name) {
            return Err(CorpusError::UnexpectedColumn(name.to_string()));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let idx = FIELD_NAMES.map(col);

    let mut records = Vec::new();
    let mut seen_ids: HashMap<String, u64> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| trim_one_newline(&row[idx[i]]).to_string();
        let rec = ArgumentPairRecord {
            id: field(0),
            topic: field(1),
            argument1: field(2),
            argument1_id: field(3),
            argument2: field(4),
            argument2_id: field(5),
            is_same_stance: parse_label(trim_one_newline(&row[idx[6]]), line)?,
        };
        validate_record(&rec, line)?;
        if let Some(&first) = seen_ids.get(&rec.id) {
            return Err(CorpusError::DuplicateId {
                id: rec.id,
                first_row: first,
                second_row: line,
            });
        }
        seen_ids.insert(rec.id.clone(), line);
        records.push(rec);
    }
    Ok(Corpus::new(records, source_name))
}

fn parse_jsonl<R: Read>(reader: R, source_name: &str) -> Result<Corpus, CorpusError> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;

    let mut records = Vec::new();
    let mut seen_ids: HashMap<String, u64> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let row = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| CorpusError::BadRow { row, message: e.to_string() })?;
        let obj = value.as_object().ok_or_else(|| CorpusError::BadRow {
            row,
            message: "expected a JSON object".into(),
        })?;
        for key in obj.keys() {
            if !FIELD_NAMES.contains(&key.as_str()) {
                return Err(CorpusError::UnexpectedColumn(key.clone()));
            }
        }
        let text_field = |name: &str| -> Result<String, CorpusError> {
            let v = obj
                .get(name)
                .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))?;
            let s = v.as_str().ok_or_else(|| CorpusError::BadRow {
                row,
                message: format!("field `{name}` is not a string"),
            })?;
            Ok(trim_one_newline(s).to_string())
        };
        let label_value = obj
            .get("is_same_stance")
            .ok_or_else(|| CorpusError::MissingColumn("is_same_stance".into()))?;
        let is_same_stance = match label_value {
            serde_json::Value::Bool(b) => *b,
            serde_json::Value::String(s) => parse_label(s, row)?,
            other => {
                return Err(CorpusError::BadLabel { row, value: other.to_string() });
            }
        };
        let rec = ArgumentPairRecord {
            id: text_field("id")?,
            topic: text_field("topic")?,
            argument1: text_field("argument1")?,
            argument1_id: text_field("argument1_id")?,
            argument2: text_field("argument2")?,
            argument2_id: text_field("argument2_id")?,
            is_same_stance,
        };
        validate_record(&rec, row)?;
        if let Some(&first) = seen_ids.get(&rec.id) {
            return Err(CorpusError::DuplicateId {
                id: rec.id,
                first_row: first,
                second_row: row,
            });
        }
        seen_ids.insert(rec.id.clone(), row);
        records.push(rec);
    }
    Ok(Corpus::new(records, source_name))
}

/// Write one JSON object per record, field order as in the schema.
pub fn write_jsonl<W: Write>(corpus: &Corpus, mut writer: W) -> Result<(), CorpusError> {
    for rec in &corpus.records {
        serde_json::to_writer(&mut writer, rec)
            .map_err(|e| CorpusError::Io(std::io::Error::other(e)))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Write csv with the canonical header.
pub fn write_csv<W: Write>(corpus: &Corpus, writer: W) -> Result<(), CorpusError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(FIELD_NAMES)?;
    for rec in &corpus.records {
        wtr.write_record([
            rec.id.as_str(),
            rec.topic.as_str(),
            rec.argument1.as_str(),
            rec.argument1_id.as_str(),
            rec.argument2.as_str(),
            rec.argument2_id.as_str(),
            if rec.is_same_stance { "true" } else { "false" },
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Partition records by topic and label.
pub fn class_statistics(corpus: &Corpus) -> ClassStatistics {
    let mut per_topic: BTreeMap<String, ClassCounts> = BTreeMap::new();
    for rec in &corpus.records {
        let counts = per_topic.entry(rec.topic.clone()).or_insert(ClassCounts {
            same_side: 0,
            different_side: 0,
            total: 0,
        });
        if rec.is_same_stance {
            counts.same_side += 1;
        } else {
            counts.different_side += 1;
        }
        counts.total += 1;
    }
    ClassStatistics { per_topic }
}

/// Shuffle with a seeded permutation and split off the first
/// `floor(fraction * N)` records as the training set.
pub fn split(corpus: &Corpus, fraction: f64, seed: u64) -> Result<DataSplit, CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::BadFraction(fraction));
    }
    let mut records = corpus.records.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    let n_train = (fraction * records.len() as f64).floor() as usize;
    let test = records.split_off(n_train);
    Ok(DataSplit {
        train: Corpus::new(records, format!("{}[train]", corpus.source_name)),
        test: Corpus::new(test, format!("{}[test]", corpus.source_name)),
        fraction,
        seed,
    })
}

/// Keep exactly the records whose encoded pair length (3 special tokens plus
/// both subword lengths) fits in `max_seq_len`; order preserved.
pub fn filter_untruncated(corpus: &Corpus, vocab: &Vocabulary, max_seq_len: usize) -> Corpus {
    let lengths = par::map_ordered(&corpus.records, |rec| encoded_pair_len(rec, vocab));
    let records = corpus
        .records
        .iter()
        .zip(&lengths)
        .filter(|(_, &len)| len <= max_seq_len)
        .map(|(rec, _)| rec.clone())
        .collect();
    Corpus::new(records, corpus.source_name.clone())
}

/// Histogram of encoded pair lengths with cumulative fractions at
/// `thresholds`. Errors on an empty corpus (the fractions are undefined).
pub fn length_histogram(
    corpus: &Corpus,
    vocab: &Vocabulary,
    bucket_width: usize,
    thresholds: &[usize],
) -> Result<LengthHistogram, CorpusError> {
    assert!(bucket_width >= 1, "bucket_width must be >= 1");
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus("length_histogram"));
    }
    let lengths = par::map_ordered(&corpus.records, |rec| encoded_pair_len(rec, vocab));
    let mut buckets: BTreeMap<usize, usize> = BTreeMap::new();
    for &len in &lengths {
        *buckets.entry(len / bucket_width).or_insert(0) += 1;
    }
    let total = lengths.len();
    let mut fraction_leq = BTreeMap::new();
    for &t in thresholds {
        let n = lengths.iter().filter(|&&len| len <= t).count();
        fraction_leq.insert(t, n as f64 / total as f64);
    }
    Ok(LengthHistogram {
        bucket_width,
        buckets,
        total_pairs: total,
        fraction_leq,
    })
}
