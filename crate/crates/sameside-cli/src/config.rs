//! Run configuration: a flat key=value file, every key overridable by a
//! long flag of the same name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use sameside::corpus::CorpusFormat;
use sameside::eval::{ModelKind, SplitMode};

/// Every recognized configuration key.
pub const KNOWN_KEYS: [&str; 30] = [
    "data",
    "format",
    "train_data",
    "test_data",
    "vocab",
    "checkpoint",
    "encoded_cache",
    "out_dir",
    "preset",
    "max_seq_len",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "batch_size",
    "epochs",
    "seed",
    "fraction",
    "vocab_max_size",
    "vocab_min_freq",
    "bucket_width",
    "thresholds",
    "split_mode",
    "models",
    "lengths",
    "trunc_train",
    "trunc_test",
    "lambda",
    "svm_epochs",
    "jobs",
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub format: Option<CorpusFormat>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub encoded_cache: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub preset: String,
    pub max_seq_len: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub fraction: f64,
    pub vocab_max_size: usize,
    pub vocab_min_freq: usize,
    pub bucket_width: usize,
    pub thresholds: Vec<usize>,
    pub split_mode: SplitMode,
    pub models: Vec<ModelKind>,
    pub lengths: Vec<usize>,
    pub trunc_train: bool,
    pub trunc_test: bool,
    pub lambda: f64,
    pub svm_epochs: usize,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            format: None,
            train_data: None,
            test_data: None,
            vocab: None,
            checkpoint: None,
            encoded_cache: None,
            out_dir: PathBuf::from("out"),
            preset: "base-mini".into(),
            max_seq_len: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            epochs: 3,
            seed: 42,
            fraction: 0.9,
            vocab_max_size: 8192,
            vocab_min_freq: 2,
            bucket_width: 32,
            thresholds: vec![512],
            split_mode: SplitMode::Within,
            models: vec![ModelKind::BaseMini, ModelKind::LargeMini],
            lengths: vec![32, 64, 128, 256, 512],
            trunc_train: true,
            trunc_test: true,
            lambda: 1e-4,
            svm_epochs: 5,
            jobs: None,
        }
    }
}

/// Flag-level overrides; long flag names equal the config-file keys.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true, help = "Input corpus path")]
    pub data: Option<PathBuf>,
    #[arg(long, global = true, help = "Corpus format: csv or jsonl (default: by extension)")]
    pub format: Option<String>,
    #[arg(long = "train_data", global = true, help = "Pre-split training corpus path")]
    pub train_data: Option<PathBuf>,
    #[arg(long = "test_data", global = true, help = "Pre-split test corpus path")]
    pub test_data: Option<PathBuf>,
    #[arg(long, global = true, help = "Vocabulary file (built from data when absent)")]
    pub vocab: Option<PathBuf>,
    #[arg(long, global = true, help = "Model checkpoint path")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long = "encoded_cache", global = true, help = "Binary cache for encoded pairs")]
    pub encoded_cache: Option<PathBuf>,
    #[arg(long = "out_dir", global = true, help = "Output directory")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, help = "Model preset: base-mini or large-mini")]
    pub preset: Option<String>,
    #[arg(long = "max_seq_len", global = true, help = "Maximum encoded sequence length (8..=512)")]
    pub max_seq_len: Option<usize>,
    #[arg(long = "learning_rate", global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub beta1: Option<f64>,
    #[arg(long, global = true)]
    pub beta2: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long = "batch_size", global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, help = "Train fraction for `split` (0,1)")]
    pub fraction: Option<f64>,
    #[arg(long = "vocab_max_size", global = true)]
    pub vocab_max_size: Option<usize>,
    #[arg(long = "vocab_min_freq", global = true)]
    pub vocab_min_freq: Option<usize>,
    #[arg(long = "bucket_width", global = true, help = "Histogram bucket width in tokens")]
    pub bucket_width: Option<usize>,
    #[arg(long, global = true, help = "Comma-separated histogram thresholds")]
    pub thresholds: Option<String>,
    #[arg(long = "split_mode", global = true, help = "within or cross")]
    pub split_mode: Option<String>,
    #[arg(long, global = true, help = "Comma-separated model kinds for sweeps")]
    pub models: Option<String>,
    #[arg(long, global = true, help = "Comma-separated sequence lengths for sweeps")]
    pub lengths: Option<String>,
    #[arg(long = "trunc_train", global = true, help = "true: truncate over-length training pairs; false: drop them")]
    pub trunc_train: Option<bool>,
    #[arg(long = "trunc_test", global = true)]
    pub trunc_test: Option<bool>,
    #[arg(long, global = true, help = "SVM regularization strength")]
    pub lambda: Option<f64>,
    #[arg(long = "svm_epochs", global = true)]
    pub svm_epochs: Option<usize>,
    #[arg(long, global = true, help = "Worker pool size (default: number of processors)")]
    pub jobs: Option<usize>,
}

fn parse_list<T: std::str::FromStr>(raw: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("key `{key}`: {e}")))
        .collect()
}

impl RunConfig {
    /// Defaults, then the config file (if any), then command-line flags.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file `{}`", path.display()))?;
            config.apply_file(&text)?;
        }
        config.apply_flags(flags)?;
        Ok(config)
    }

    fn apply_file(&mut self, text: &str) -> Result<()> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `key = value`", lineno + 1))?;
            pairs.insert(key.trim().to_string(), value.trim().to_string());
        }
        for key in pairs.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("unknown config key `{key}`");
            }
        }
        let get = |key: &str| pairs.get(key).map(String::as_str);
        macro_rules! set_parse {
            ($field:ident, $key:literal) => {
                if let Some(raw) = get($key) {
                    self.$field = raw
                        .parse()
                        .map_err(|e| anyhow!("key `{}`: {e}", $key))?;
                }
            };
        }
        if let Some(raw) = get("data") {
            self.data = Some(PathBuf::from(raw));
        }
        if let Some(raw) = get("format") {
            self.format = Some(raw.parse().map_err(|e| anyhow!("key `format`: {e}"))?);
        }
        if let Some(raw) = get("train_data") {
            self.train_data = Some(PathBuf::from(raw));
        }
        if let Some(raw) = get("test_data") {
            self.test_data = Some(PathBuf::from(raw));
        }
        if let Some(raw) = get("vocab") {
            self.vocab = Some(PathBuf::from(raw));
        }
        if let Some(raw) = get("checkpoint") {
            self.checkpoint = Some(PathBuf::from(raw));
        }
        if let Some(raw) = get("encoded_cache") {
            self.encoded_cache = Some(PathBuf::from(raw));
        }
        if let Some(raw) = get("out_dir") {
            self.out_dir = PathBuf::from(raw);
        }
        if let Some(raw) = get("preset") {
            self.preset = raw.to_string();
        }
        set_parse!(max_seq_len, "max_seq_len");
        set_parse!(learning_rate, "learning_rate");
        set_parse!(beta1, "beta1");
        set_parse!(beta2, "beta2");
        set_parse!(epsilon, "epsilon");
        set_parse!(batch_size, "batch_size");
        set_parse!(epochs, "epochs");
        set_parse!(seed, "seed");
        set_parse!(fraction, "fraction");
        set_parse!(vocab_max_size, "vocab_max_size");
        set_parse!(vocab_min_freq, "vocab_min_freq");
        set_parse!(bucket_width, "bucket_width");
        if let Some(raw) = get("thresholds") {
            self.thresholds = parse_list(raw, "thresholds")?;
        }
        if let Some(raw) = get("split_mode") {
            self.split_mode = raw.parse().map_err(|e| anyhow!("key `split_mode`: {e}"))?;
        }
        if let Some(raw) = get("models") {
            self.models = parse_list(raw, "models")?;
        }
        if let Some(raw) = get("lengths") {
            self.lengths = parse_list(raw, "lengths")?;
        }
        set_parse!(trunc_train, "trunc_train");
        set_parse!(trunc_test, "trunc_test");
        set_parse!(lambda, "lambda");
        if let Some(raw) = get("svm_epochs") {
            self.svm_epochs = raw.parse().map_err(|e| anyhow!("key `svm_epochs`: {e}"))?;
        }
        if let Some(raw) = get("jobs") {
            self.jobs = Some(raw.parse().map_err(|e| anyhow!("key `jobs`: {e}"))?);
        }
        Ok(())
    }

    fn apply_flags(&mut self, flags: &Overrides) -> Result<()> {
        if let Some(v) = &flags.data {
            self.data = Some(v.clone());
        }
        if let Some(v) = &flags.format {
            self.format = Some(v.parse().map_err(|e| anyhow!("--format: {e}"))?);
        }
        if let Some(v) = &flags.train_data {
            self.train_data = Some(v.clone());
        }
        if let Some(v) = &flags.test_data {
            self.test_data = Some(v.clone());
        }
        if let Some(v) = &flags.vocab {
            self.vocab = Some(v.clone());
        }
        if let Some(v) = &flags.checkpoint {
            self.checkpoint = Some(v.clone());
        }
        if let Some(v) = &flags.encoded_cache {
            self.encoded_cache = Some(v.clone());
        }
        if let Some(v) = &flags.out_dir {
            self.out_dir = v.clone();
        }
        if let Some(v) = &flags.preset {
            self.preset = v.clone();
        }
        if let Some(v) = flags.max_seq_len {
            self.max_seq_len = v;
        }
        if let Some(v) = flags.learning_rate {
            self.learning_rate = v;
        }
        if let Some(v) = flags.beta1 {
            self.beta1 = v;
        }
        if let Some(v) = flags.beta2 {
            self.beta2 = v;
        }
        if let Some(v) = flags.epsilon {
            self.epsilon = v;
        }
        if let Some(v) = flags.batch_size {
            self.batch_size = v;
        }
        if let Some(v) = flags.epochs {
            self.epochs = v;
        }
        if let Some(v) = flags.seed {
            self.seed = v;
        }
        if let Some(v) = flags.fraction {
            self.fraction = v;
        }
        if let Some(v) = flags.vocab_max_size {
            self.vocab_max_size = v;
        }
        if let Some(v) = flags.vocab_min_freq {
            self.vocab_min_freq = v;
        }
        if let Some(v) = flags.bucket_width {
            self.bucket_width = v;
        }
        if let Some(v) = &flags.thresholds {
            self.thresholds = parse_list(v, "thresholds")?;
        }
        if let Some(v) = &flags.split_mode {
            self.split_mode = v.parse().map_err(|e| anyhow!("--split_mode: {e}"))?;
        }
        if let Some(v) = &flags.models {
            self.models = parse_list(v, "models")?;
        }
        if let Some(v) = &flags.lengths {
            self.lengths = parse_list(v, "lengths")?;
        }
        if let Some(v) = flags.trunc_train {
            self.trunc_train = v;
        }
        if let Some(v) = flags.trunc_test {
            self.trunc_test = v;
        }
        if let Some(v) = flags.lambda {
            self.lambda = v;
        }
        if let Some(v) = flags.svm_epochs {
            self.svm_epochs = v;
        }
        if let Some(v) = flags.jobs {
            self.jobs = Some(v);
        }
        Ok(())
    }

    pub fn hyperparams(&self) -> sameside::Hyperparams {
        sameside::Hyperparams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
        }
    }

    pub fn experiment_params(&self) -> sameside::eval::ExperimentParams {
        sameside::eval::ExperimentParams {
            hyper: self.hyperparams(),
            svm_lambda: self.lambda,
            svm_epochs: self.svm_epochs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags_override_defaults() {
        let mut config = RunConfig::default();
        config
            .apply_file("seed = 7\nlengths = 32, 64\n# comment\nout_dir = results\n")
            .unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.lengths, vec![32, 64]);
        assert_eq!(config.out_dir, PathBuf::from("results"));

        let flags = Overrides { seed: Some(9), ..Default::default() };
        config.apply_flags(&flags).unwrap();
        assert_eq!(config.seed, 9);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut config = RunConfig::default();
        assert!(config.apply_file("no_such_key = 1\n").is_err());
    }

    #[test]
    fn bad_value_is_rejected() {
        let mut config = RunConfig::default();
        let err = config.apply_file("epochs = many\n").unwrap_err();
        assert!(err.to_string().contains("epochs"));
    }
}
