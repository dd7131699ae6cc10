//! One function per subcommand. Each returns a typed error carrying the
//! process exit code: 1 usage/config, 2 data, 3 experiment.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde_json::json;

use sameside::baseline::{
    predict_svm, save_model, train_svm, BowFeaturizer, BASELINE_LABEL,
};
use sameside::corpus::{
    class_statistics, length_histogram, parse_corpus, split, write_jsonl, Corpus, CorpusFormat,
    DataSplit,
};
use sameside::eval::{
    confusion, emit_results_table, metrics, run_matrix, sweep_accuracy_series, TableFormat,
};
use sameside::model::{load_checkpoint, save_checkpoint, ModelConfig};
use sameside::plot::{emit_plot, PlotKind, Series};
use sameside::tokenizer::{
    build_vocab, encode_corpus, read_encoded, write_encoded, EncodedPair, Vocabulary,
    MAX_SEQ_LEN_CAP, MIN_SEQ_LEN,
};
use sameside::training::{fine_tune_encoded, gradient_check};
use sameside::Parameters;

use crate::config::RunConfig;

/// Error plus the process exit code it maps to.
pub struct CmdError {
    pub code: i32,
    pub error: anyhow::Error,
}

pub type CmdResult = Result<(), CmdError>;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_EXPERIMENT: i32 = 3;

fn usage(error: impl Into<anyhow::Error>) -> CmdError {
    CmdError { code: EXIT_USAGE, error: error.into() }
}

fn data_err(error: impl Into<anyhow::Error>) -> CmdError {
    CmdError { code: EXIT_DATA, error: error.into() }
}

fn experiment(error: impl Into<anyhow::Error>) -> CmdError {
    CmdError { code: EXIT_EXPERIMENT, error: error.into() }
}

fn detect_format(path: &Path, config: &RunConfig) -> Result<CorpusFormat, CmdError> {
    if let Some(format) = config.format {
        return Ok(format);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(CorpusFormat::Csv),
        Some("jsonl") | Some("json") => Ok(CorpusFormat::Jsonl),
        _ => Err(usage(anyhow!(
            "cannot infer corpus format from `{}`; set `format`",
            path.display()
        ))),
    }
}

fn load_corpus_at(path: &Path, config: &RunConfig) -> Result<Corpus, CmdError> {
    if !path.exists() {
        return Err(usage(anyhow!("input path `{}` does not exist", path.display())));
    }
    let format = detect_format(path, config)?;
    let file = File::open(path)
        .with_context(|| format!("open `{}`", path.display()))
        .map_err(data_err)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    parse_corpus(BufReader::new(file), format, &name).map_err(data_err)
}

fn require_data(config: &RunConfig) -> Result<Corpus, CmdError> {
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| usage(anyhow!("no input corpus: set `data`")))?;
    load_corpus_at(path, config)
}

fn ensure_out_dir(config: &RunConfig) -> Result<(), CmdError> {
    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("create output directory `{}`", config.out_dir.display()))
        .map_err(usage)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CmdError> {
    std::fs::write(path, bytes)
        .with_context(|| format!("write `{}`", path.display()))
        .map_err(data_err)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CmdError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .context("serialize json")
        .map_err(data_err)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

/// Load the vocabulary if the configured file exists, otherwise build it
/// from `corpus` and save it (to the configured path or `out_dir/vocab.txt`).
fn load_or_build_vocab(config: &RunConfig, corpus: &Corpus) -> Result<Vocabulary, CmdError> {
    if let Some(path) = &config.vocab {
        if path.exists() {
            let file = File::open(path)
                .with_context(|| format!("open `{}`", path.display()))
                .map_err(data_err)?;
            return Vocabulary::load(BufReader::new(file)).map_err(data_err);
        }
    }
    let vocab = build_vocab(corpus, config.vocab_max_size, config.vocab_min_freq)
        .map_err(data_err)?;
    let path = config
        .vocab
        .clone()
        .unwrap_or_else(|| config.out_dir.join("vocab.txt"));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).ok();
    }
    let file = File::create(&path)
        .with_context(|| format!("create `{}`", path.display()))
        .map_err(data_err)?;
    let mut writer = BufWriter::new(file);
    vocab.save(&mut writer).map_err(data_err)?;
    writer.flush().map_err(|e| data_err(anyhow!(e)))?;
    println!("vocabulary: built {} entries -> {}", vocab.len(), path.display());
    Ok(vocab)
}

fn validate_max_seq_len(len: usize) -> Result<(), CmdError> {
    if !(MIN_SEQ_LEN..=MAX_SEQ_LEN_CAP).contains(&len) {
        return Err(usage(anyhow!(
            "max_seq_len {len} out of range [{MIN_SEQ_LEN}, {MAX_SEQ_LEN_CAP}]"
        )));
    }
    Ok(())
}

/// `train_data`/`test_data` when both are set, otherwise a seeded split of
/// `data`.
fn prepare_split(config: &RunConfig) -> Result<DataSplit, CmdError> {
    match (&config.train_data, &config.test_data) {
        (Some(train_path), Some(test_path)) => {
            let train = load_corpus_at(train_path, config)?;
            let test = load_corpus_at(test_path, config)?;
            let fraction = train.len() as f64 / (train.len() + test.len()).max(1) as f64;
            Ok(DataSplit { train, test, fraction, seed: config.seed })
        }
        (None, None) => {
            let corpus = require_data(config)?;
            split(&corpus, config.fraction, config.seed).map_err(data_err)
        }
        _ => Err(usage(anyhow!("set both `train_data` and `test_data`, or neither"))),
    }
}

pub fn cmd_ingest(config: &RunConfig) -> CmdResult {
    let corpus = require_data(config)?;
    ensure_out_dir(config)?;
    let out = config.out_dir.join("corpus.jsonl");
    let file = File::create(&out)
        .with_context(|| format!("create `{}`", out.display()))
        .map_err(data_err)?;
    let mut writer = BufWriter::new(file);
    write_jsonl(&corpus, &mut writer).map_err(data_err)?;
    writer.flush().map_err(|e| data_err(anyhow!(e)))?;

    let stats = class_statistics(&corpus);
    let overall = stats.overall();
    println!(
        "ingested {} records over {} topics ({} same side, {} different side) -> {}",
        corpus.len(),
        corpus.topics().len(),
        overall.same_side,
        overall.different_side,
        out.display()
    );
    Ok(())
}

pub fn cmd_stats(config: &RunConfig) -> CmdResult {
    let corpus = require_data(config)?;
    if corpus.is_empty() {
        return Err(data_err(anyhow!("corpus `{}` has no records", corpus.source_name)));
    }
    ensure_out_dir(config)?;
    let stats = class_statistics(&corpus);
    write_json(&config.out_dir.join("stats.json"), &stats)?;
    let markdown = stats.to_markdown();
    write_file(&config.out_dir.join("stats.md"), markdown.as_bytes())?;
    print!("{markdown}");
    let overall = stats.overall();
    println!(
        "total: {} same side, {} different side, {} records",
        overall.same_side, overall.different_side, overall.total
    );
    Ok(())
}

pub fn cmd_split(config: &RunConfig) -> CmdResult {
    let corpus = require_data(config)?;
    ensure_out_dir(config)?;
    let data = split(&corpus, config.fraction, config.seed).map_err(data_err)?;
    for (name, part) in [("train.jsonl", &data.train), ("test.jsonl", &data.test)] {
        let path = config.out_dir.join(name);
        let file = File::create(&path)
            .with_context(|| format!("create `{}`", path.display()))
            .map_err(data_err)?;
        let mut writer = BufWriter::new(file);
        write_jsonl(part, &mut writer).map_err(data_err)?;
        writer.flush().map_err(|e| data_err(anyhow!(e)))?;
    }
    write_json(
        &config.out_dir.join("split.json"),
        &json!({
            "source": corpus.source_name,
            "fraction": config.fraction,
            "seed": config.seed,
            "n_train": data.train.len(),
            "n_test": data.test.len(),
        }),
    )?;
    println!(
        "split {} records into {} train / {} test (fraction {}, seed {})",
        corpus.len(),
        data.train.len(),
        data.test.len(),
        config.fraction,
        config.seed
    );
    Ok(())
}

pub fn cmd_build_vocab(config: &RunConfig) -> CmdResult {
    let corpus = require_data(config)?;
    ensure_out_dir(config)?;
    let vocab = build_vocab(&corpus, config.vocab_max_size, config.vocab_min_freq)
        .map_err(data_err)?;
    let path = config
        .vocab
        .clone()
        .unwrap_or_else(|| config.out_dir.join("vocab.txt"));
    let file = File::create(&path)
        .with_context(|| format!("create `{}`", path.display()))
        .map_err(data_err)?;
    let mut writer = BufWriter::new(file);
    vocab.save(&mut writer).map_err(data_err)?;
    writer.flush().map_err(|e| data_err(anyhow!(e)))?;
    println!(
        "vocabulary: {} entries (max_size {}, min_freq {}) -> {}",
        vocab.len(),
        config.vocab_max_size,
        config.vocab_min_freq,
        path.display()
    );
    Ok(())
}

pub fn cmd_hist(config: &RunConfig) -> CmdResult {
    if config.bucket_width == 0 {
        return Err(usage(anyhow!("bucket_width must be at least 1")));
    }
    let corpus = require_data(config)?;
    if corpus.is_empty() {
        return Err(data_err(anyhow!("corpus `{}` has no records", corpus.source_name)));
    }
    ensure_out_dir(config)?;
    let vocab = load_or_build_vocab(config, &corpus)?;
    let hist = length_histogram(&corpus, &vocab, config.bucket_width, &config.thresholds)
        .map_err(data_err)?;

    write_file(&config.out_dir.join("hist.csv"), hist.to_csv().as_bytes())?;
    write_json(&config.out_dir.join("hist.json"), &hist)?;
    let series = vec![Series::new(
        "argument pairs",
        hist.buckets
            .iter()
            .map(|(&idx, &count)| ((idx * hist.bucket_width) as f64, count as f64))
            .collect(),
    )];
    let svg = emit_plot(
        &series,
        PlotKind::Bar,
        "Distribution of encoded pair lengths",
        "encoded length (tokens)",
        "pairs",
    )
    .map_err(data_err)?;
    write_file(&config.out_dir.join("hist.svg"), &svg)?;

    for (threshold, fraction) in &hist.fraction_leq {
        println!("fraction(length <= {threshold}) = {fraction:.4}");
    }
    Ok(())
}

fn transformer_config(config: &RunConfig, vocab: &Vocabulary) -> Result<ModelConfig, CmdError> {
    ModelConfig::by_preset(&config.preset, vocab.len(), config.max_seq_len).map_err(usage)
}

fn encode_with_cache(
    config: &RunConfig,
    corpus: &Corpus,
    vocab: &Vocabulary,
) -> Result<Vec<EncodedPair>, CmdError> {
    if let Some(cache) = &config.encoded_cache {
        if cache.exists() {
            let file = File::open(cache)
                .with_context(|| format!("open `{}`", cache.display()))
                .map_err(data_err)?;
            let (pairs, cached_len) = read_encoded(BufReader::new(file)).map_err(data_err)?;
            if cached_len != config.max_seq_len {
                return Err(usage(anyhow!(
                    "encoded cache `{}` was built for max_seq_len {cached_len}, not {}",
                    cache.display(),
                    config.max_seq_len
                )));
            }
            println!("loaded {} encoded pairs from {}", pairs.len(), cache.display());
            return Ok(pairs);
        }
    }
    let pairs = encode_corpus(corpus, vocab, config.max_seq_len).map_err(data_err)?;
    if let Some(cache) = &config.encoded_cache {
        let file = File::create(cache)
            .with_context(|| format!("create `{}`", cache.display()))
            .map_err(data_err)?;
        let mut writer = BufWriter::new(file);
        write_encoded(&pairs, config.max_seq_len, &mut writer).map_err(data_err)?;
        writer.flush().map_err(|e| data_err(anyhow!(e)))?;
        println!("cached {} encoded pairs -> {}", pairs.len(), cache.display());
    }
    Ok(pairs)
}

pub fn cmd_train(config: &RunConfig) -> CmdResult {
    validate_max_seq_len(config.max_seq_len)?;
    let train_path = config
        .train_data
        .clone()
        .or_else(|| config.data.clone())
        .ok_or_else(|| usage(anyhow!("no training corpus: set `train_data` or `data`")))?;
    let corpus = load_corpus_at(&train_path, config)?;
    ensure_out_dir(config)?;
    let vocab = load_or_build_vocab(config, &corpus)?;
    let model_config = transformer_config(config, &vocab)?;
    let encoded = encode_with_cache(config, &corpus, &vocab)?;

    let hp = config.hyperparams();
    let (params, report) = fine_tune_encoded(&model_config, &encoded, &hp).map_err(experiment)?;

    let ckpt_path = config
        .checkpoint
        .clone()
        .unwrap_or_else(|| config.out_dir.join("model.ckpt"));
    let file = File::create(&ckpt_path)
        .with_context(|| format!("create `{}`", ckpt_path.display()))
        .map_err(data_err)?;
    let mut writer = BufWriter::new(file);
    save_checkpoint(&params, &mut writer).map_err(data_err)?;
    writer.flush().map_err(|e| data_err(anyhow!(e)))?;
    write_json(&config.out_dir.join("train_report.json"), &report)?;

    println!(
        "trained {} ({} examples, {} epochs): final train accuracy {:.4}, {:.1}s -> {}",
        model_config.preset_name,
        report.num_examples,
        hp.epochs,
        report.final_train_accuracy,
        report.wall_seconds,
        ckpt_path.display()
    );
    Ok(())
}

pub fn cmd_evaluate(config: &RunConfig) -> CmdResult {
    let ckpt_path = config
        .checkpoint
        .clone()
        .unwrap_or_else(|| config.out_dir.join("model.ckpt"));
    if !ckpt_path.exists() {
        return Err(usage(anyhow!("checkpoint `{}` does not exist", ckpt_path.display())));
    }
    let file = File::open(&ckpt_path)
        .with_context(|| format!("open `{}`", ckpt_path.display()))
        .map_err(data_err)?;
    let params: Parameters = load_checkpoint(BufReader::new(file)).map_err(data_err)?;

    let test_path = config
        .test_data
        .clone()
        .or_else(|| config.data.clone())
        .ok_or_else(|| usage(anyhow!("no evaluation corpus: set `test_data` or `data`")))?;
    let corpus = load_corpus_at(&test_path, config)?;
    ensure_out_dir(config)?;
    let vocab = load_or_build_vocab(config, &corpus)?;
    if vocab.len() != params.config.vocab_size {
        return Err(usage(anyhow!(
            "vocabulary size {} does not match checkpoint vocab_size {}",
            vocab.len(),
            params.config.vocab_size
        )));
    }
    let eval_len = config.max_seq_len.min(params.config.max_positions);
    validate_max_seq_len(eval_len)?;

    let corpus = if config.trunc_test {
        corpus
    } else {
        let kept = sameside::corpus::filter_untruncated(&corpus, &vocab, eval_len);
        println!("no-trunc test: {} of {} pairs fit {eval_len} tokens", kept.len(), corpus.len());
        kept
    };
    if corpus.is_empty() {
        return Err(data_err(anyhow!("no test pairs left to evaluate")));
    }

    let encoded = encode_corpus(&corpus, &vocab, eval_len).map_err(data_err)?;
    let predictions = sameside::model::predict(&params, &encoded).map_err(experiment)?;
    let labels: Vec<bool> = corpus.records.iter().map(|r| r.is_same_stance).collect();
    let cm = confusion(&predictions, &labels).map_err(experiment)?;
    let report = metrics(&cm);

    write_json(
        &config.out_dir.join("eval_metrics.json"),
        &json!({
            "checkpoint": ckpt_path.display().to_string(),
            "data": test_path.display().to_string(),
            "model": params.config.preset_name,
            "max_seq_len": eval_len,
            "trunc_test": config.trunc_test,
            "n_test": corpus.len(),
            "metrics": report,
        }),
    )?;
    println!(
        "evaluated {} pairs: accuracy {:.4}, precision {:.4}, recall {:.4}, f1 {:.4}",
        corpus.len(),
        report.accuracy,
        report.precision,
        report.recall,
        report.f1
    );
    Ok(())
}

pub fn cmd_sweep(config: &RunConfig) -> CmdResult {
    for &len in &config.lengths {
        validate_max_seq_len(len)?;
    }
    if config.models.is_empty() {
        return Err(usage(anyhow!("no models configured for the sweep")));
    }
    let data = prepare_split(config)?;
    ensure_out_dir(config)?;
    let vocab = load_or_build_vocab(config, &data.train)?;

    let params = config.experiment_params();
    let table = run_matrix(
        config.split_mode,
        &config.models,
        &config.lengths,
        config.trunc_train,
        config.trunc_test,
        &data,
        &vocab,
        &params,
    )
    .map_err(usage)?;

    let csv = emit_results_table(&table, TableFormat::Csv);
    let markdown = emit_results_table(&table, TableFormat::Markdown);
    let json_bytes = emit_results_table(&table, TableFormat::Json);
    write_file(&config.out_dir.join("results.csv"), &csv)?;
    write_file(&config.out_dir.join("results.md"), &markdown)?;
    write_file(&config.out_dir.join("results.json"), &json_bytes)?;

    let series = sweep_accuracy_series(&table);
    if !series.is_empty() {
        let svg = emit_plot(
            &series,
            PlotKind::Line,
            &format!("Accuracy {} topics by maximum sequence length", config.split_mode),
            "maximum sequence length (tokens)",
            "accuracy",
        )
        .map_err(experiment)?;
        write_file(&config.out_dir.join("sweep.svg"), &svg)?;
    }

    print!("{}", String::from_utf8_lossy(&markdown));
    for row in &table.rows {
        if let Some(error) = &row.error {
            eprintln!("cell {} failed: {error}", row.spec);
        }
    }
    if table.has_errors() {
        return Err(experiment(anyhow!("one or more sweep cells failed")));
    }
    Ok(())
}

pub fn cmd_baseline(config: &RunConfig) -> CmdResult {
    let data = prepare_split(config)?;
    ensure_out_dir(config)?;
    let vocab = load_or_build_vocab(config, &data.train)?;
    let featurizer = BowFeaturizer::new(&vocab);
    let model = train_svm(
        &data.train,
        &featurizer,
        config.lambda,
        config.svm_epochs,
        config.seed,
    )
    .map_err(data_err)?;

    let predictions: Vec<bool> = data
        .test
        .records
        .iter()
        .map(|rec| predict_svm(&model, rec, &featurizer))
        .collect();
    let labels: Vec<bool> = data.test.records.iter().map(|r| r.is_same_stance).collect();
    let cm = confusion(&predictions, &labels).map_err(experiment)?;
    let report = metrics(&cm);

    let model_path = config.out_dir.join("svm_model.json");
    let file = File::create(&model_path)
        .with_context(|| format!("create `{}`", model_path.display()))
        .map_err(data_err)?;
    save_model(&model, BufWriter::new(file)).map_err(data_err)?;
    write_json(
        &config.out_dir.join("baseline_metrics.json"),
        &json!({
            "baseline": BASELINE_LABEL,
            "lambda": config.lambda,
            "epochs": config.svm_epochs,
            "seed": config.seed,
            "n_train": data.train.len(),
            "n_test": data.test.len(),
            "metrics": report,
        }),
    )?;
    println!(
        "{BASELINE_LABEL}: accuracy {:.4}, f1 {:.4} on {} test pairs",
        report.accuracy,
        report.f1,
        data.test.len()
    );
    Ok(())
}

pub fn cmd_gradcheck(config: &RunConfig) -> CmdResult {
    let h = 1e-5;
    let tolerance = 1e-4;
    let batch: Vec<EncodedPair> = (0..3)
        .map(|i| synthetic_check_pair(4 + i, i % 2 == 0))
        .collect();
    let mut worst: f64 = 0.0;
    for layers in [1usize, 2] {
        let model_config = ModelConfig {
            num_layers: layers,
            hidden_size: 8,
            num_heads: 2,
            ff_size: 16,
            max_positions: 16,
            vocab_size: 16,
            preset_name: format!("gradcheck-{layers}"),
        };
        let err = gradient_check(&model_config, config.seed, &batch, h).map_err(experiment)?;
        println!("gradient check ({layers} layer): max relative error {err:.3e} (h = {h:.0e})");
        worst = worst.max(err);
    }
    if worst >= tolerance {
        return Err(experiment(anyhow!(
            "gradient check failed: max relative error {worst:.3e} >= {tolerance:.0e}"
        )));
    }
    println!("gradient check passed (tolerance {tolerance:.0e})");
    Ok(())
}

fn synthetic_check_pair(stride: u32, label: bool) -> EncodedPair {
    let ids: Vec<u32> = (0..5).map(|i| 4 + (stride + i) % 12).collect();
    let mut token_ids = vec![2u32];
    token_ids.extend_from_slice(&ids);
    token_ids.push(3);
    token_ids.push(ids[0]);
    token_ids.push(3);
    let real = token_ids.len();
    token_ids.resize(12, 0);
    let mut segment_ids = vec![0u32; ids.len() + 2];
    segment_ids.resize(12, 1);
    let mut attention_mask = vec![1u32; real];
    attention_mask.resize(12, 0);
    EncodedPair {
        token_ids,
        segment_ids,
        attention_mask,
        label,
        pair_id: format!("gradcheck-{stride}"),
    }
}

/// Plot subcommand inputs, resolved in `main`.
pub struct PlotArgs {
    pub input: PathBuf,
    pub kind: String,
    pub output: Option<PathBuf>,
}

pub fn cmd_plot(config: &RunConfig, args: &PlotArgs) -> CmdResult {
    if !args.input.exists() {
        return Err(usage(anyhow!("plot input `{}` does not exist", args.input.display())));
    }
    let bytes = std::fs::read(&args.input)
        .with_context(|| format!("read `{}`", args.input.display()))
        .map_err(data_err)?;
    ensure_out_dir(config)?;

    let (svg, default_name) = match args.kind.as_str() {
        "line" => {
            // Accuracy-vs-length lines from a sweep results.json.
            let table: sameside::ResultsTable = serde_json::from_slice(&bytes)
                .context("parse results json")
                .map_err(data_err)?;
            let series = sweep_accuracy_series(&table);
            if series.is_empty() {
                return Err(data_err(anyhow!("results contain no successful rows")));
            }
            let svg = emit_plot(
                &series,
                PlotKind::Line,
                "Accuracy by maximum sequence length",
                "maximum sequence length (tokens)",
                "accuracy",
            )
            .map_err(data_err)?;
            (svg, "plot_line.svg")
        }
        "bar" => {
            // bucket_start,count histogram csv.
            let text = String::from_utf8(bytes)
                .context("histogram csv is not utf-8")
                .map_err(data_err)?;
            let mut points = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if i == 0 {
                    if line != "bucket_start,count" {
                        return Err(data_err(anyhow!("unexpected histogram header `{line}`")));
                    }
                    continue;
                }
                let (x, y) = line
                    .split_once(',')
                    .ok_or_else(|| data_err(anyhow!("bad histogram line `{line}`")))?;
                let x: f64 = x.parse().map_err(|e| data_err(anyhow!("line {}: {e}", i + 1)))?;
                let y: f64 = y.parse().map_err(|e| data_err(anyhow!("line {}: {e}", i + 1)))?;
                points.push((x, y));
            }
            let svg = emit_plot(
                &[Series::new("argument pairs", points)],
                PlotKind::Bar,
                "Distribution of encoded pair lengths",
                "encoded length (tokens)",
                "pairs",
            )
            .map_err(data_err)?;
            (svg, "plot_bar.svg")
        }
        other => {
            return Err(usage(anyhow!("unknown plot kind `{other}` (expected line or bar)")));
        }
    };
    let out = args
        .output
        .clone()
        .unwrap_or_else(|| config.out_dir.join(default_name));
    write_file(&out, &svg)?;
    println!("wrote {}", out.display());
    Ok(())
}

