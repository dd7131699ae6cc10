//! End-to-end checks of the binary: exit codes, artifacts, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sameside"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn toy_csv(dir: &Path, n: usize) -> PathBuf {
    let mut csv = String::from(
        "id,topic,argument1,argument1_id,argument2,argument2_id,is_same_stance\n",
    );
    for i in 0..n {
        let same = i % 2 == 0;
        let topic = if i % 4 < 2 { "abortion" } else { "gay marriage" };
        csv.push_str(&format!(
            "p{i},{topic},we support the idea strongly,a{i},{},b{i},{}\n",
            if same {
                "the reply agrees with it fully"
            } else {
                "the reply rejects it fully"
            },
            if same { "True" } else { "False" }
        ));
    }
    let path = dir.join("toy.csv");
    std::fs::write(&path, csv).unwrap();
    path
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

#[test]
fn stats_writes_markdown_and_json() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 12);
    let out = dir.path().join("out");
    let output = run(&[
        "stats",
        "--data",
        data.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("topic: abortion"));
    assert!(out.join("stats.json").exists());
    assert!(out.join("stats.md").exists());
}

#[test]
fn stats_csv_and_jsonl_agree() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 16);
    let out_csv = dir.path().join("from_csv");
    assert_eq!(
        code(&run(&[
            "ingest",
            "--data",
            data.to_str().unwrap(),
            "--out_dir",
            out_csv.to_str().unwrap(),
        ])),
        0
    );
    let jsonl = out_csv.join("corpus.jsonl");

    let stats_a = dir.path().join("stats_a");
    let stats_b = dir.path().join("stats_b");
    assert_eq!(
        code(&run(&[
            "stats",
            "--data",
            data.to_str().unwrap(),
            "--out_dir",
            stats_a.to_str().unwrap(),
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "stats",
            "--data",
            jsonl.to_str().unwrap(),
            "--out_dir",
            stats_b.to_str().unwrap(),
        ])),
        0
    );
    let a = std::fs::read(stats_a.join("stats.json")).unwrap();
    let b = std::fs::read(stats_b.join("stats.json")).unwrap();
    assert_eq!(a, b, "csv and jsonl of the same records give different statistics");
}

#[test]
fn schema_error_exits_2_with_row_info() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(
        &path,
        "id,argument1,argument1_id,argument2,argument2_id,is_same_stance\np1,a,x,b,y,true\n",
    )
    .unwrap();
    let output = run(&[
        "stats",
        "--data",
        path.to_str().unwrap(),
        "--out_dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("topic"), "stderr: {stderr}");
}

#[test]
fn bad_label_reports_row_and_exits_2() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(
        &path,
        "id,topic,argument1,argument1_id,argument2,argument2_id,is_same_stance\n\
         p1,t,a,x,b,y,maybe\n",
    )
    .unwrap();
    let output = run(&[
        "stats",
        "--data",
        path.to_str().unwrap(),
        "--out_dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 2);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("row 2"), "stderr: {stderr}");
}

#[test]
fn empty_file_exits_2() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(
        &path,
        "id,topic,argument1,argument1_id,argument2,argument2_id,is_same_stance\n",
    )
    .unwrap();
    let output = run(&[
        "stats",
        "--data",
        path.to_str().unwrap(),
        "--out_dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 2);
}

#[test]
fn unknown_flag_exits_1() {
    let output = run(&["stats", "--no-such-flag"]);
    assert_eq!(code(&output), 1);
}

#[test]
fn missing_input_path_exits_1() {
    let dir = TempDir::new().unwrap();
    let output = run(&[
        "stats",
        "--data",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--out_dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 1);
}

#[test]
fn zero_bucket_width_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 4);
    let output = run(&[
        "hist",
        "--data",
        data.to_str().unwrap(),
        "--out_dir",
        dir.path().join("out").to_str().unwrap(),
        "--bucket_width",
        "0",
    ]);
    assert_eq!(code(&output), 1);
}

#[test]
fn hist_prints_threshold_fraction() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 8);
    let out = dir.path().join("out");
    let output = run(&[
        "hist",
        "--data",
        data.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
        "--bucket_width",
        "8",
        "--vocab_min_freq",
        "1",
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    // All toy pairs are short, so everything fits under the default threshold.
    assert!(stdout.contains("fraction(length <= 512) = 1.0000"), "stdout: {stdout}");
    assert!(out.join("hist.csv").exists());
    assert!(out.join("hist.svg").exists());
}

#[test]
fn sweep_rejects_over_cap_lengths() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 8);
    let output = run(&[
        "sweep",
        "--data",
        data.to_str().unwrap(),
        "--out_dir",
        dir.path().join("out").to_str().unwrap(),
        "--models",
        "svm",
        "--lengths",
        "512,1024",
    ]);
    assert_eq!(code(&output), 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("1024"), "stderr: {stderr}");
}

#[test]
fn sweep_writes_tables_and_plot() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 24);
    let out = dir.path().join("out");
    let output = run(&[
        "sweep",
        "--data",
        data.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
        "--models",
        "svm",
        "--lengths",
        "16,32",
        "--fraction",
        "0.8",
        "--svm_epochs",
        "5",
        "--vocab_min_freq",
        "1",
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "header plus two rows: {csv}");
    assert!(csv.starts_with("No-Trunc-Train,No-Trunc-Test,Model,#Train,#Test,Acc,F1"));
    assert!(out.join("results.md").exists());
    assert!(out.join("results.json").exists());
    assert!(out.join("sweep.svg").exists());
}

#[test]
fn failed_sweep_cell_exits_3_and_writes_partial_rows() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 24);
    let out = dir.path().join("out");
    // Every toy pair is longer than 8 tokens, so the no-trunc filter empties
    // the training set and the cell fails.
    let output = run(&[
        "sweep",
        "--data",
        data.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
        "--models",
        "base-mini",
        "--lengths",
        "8",
        "--trunc_train",
        "false",
        "--fraction",
        "0.8",
        "--vocab_min_freq",
        "1",
    ]);
    assert_eq!(code(&output), 3, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.contains("failed"), "results.csv: {csv}");
    assert_eq!(csv.lines().count(), 2, "one partial row expected: {csv}");
}

#[test]
fn train_evaluate_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 16);
    let out = dir.path().join("out");
    let train = run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
        "--max_seq_len",
        "16",
        "--epochs",
        "1",
        "--batch_size",
        "8",
        "--vocab_min_freq",
        "1",
    ]);
    assert_eq!(code(&train), 0, "stderr: {}", String::from_utf8_lossy(&train.stderr));
    assert!(out.join("model.ckpt").exists());
    assert!(out.join("train_report.json").exists());

    let eval = run(&[
        "evaluate",
        "--data",
        data.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
        "--vocab",
        out.join("vocab.txt").to_str().unwrap(),
        "--checkpoint",
        out.join("model.ckpt").to_str().unwrap(),
        "--max_seq_len",
        "16",
    ]);
    assert_eq!(code(&eval), 0, "stderr: {}", String::from_utf8_lossy(&eval.stderr));
    let stdout = String::from_utf8_lossy(&eval.stdout);
    assert!(stdout.contains("accuracy"), "stdout: {stdout}");
    assert!(out.join("eval_metrics.json").exists());
}

#[test]
fn train_uses_encoded_cache_on_second_run() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 8);
    let cache = dir.path().join("pairs.bin");
    let args = |out: &str| {
        vec![
            "train".to_string(),
            "--data".into(),
            data.to_str().unwrap().into(),
            "--out_dir".into(),
            dir.path().join(out).to_str().unwrap().into(),
            "--max_seq_len".into(),
            "16".into(),
            "--epochs".into(),
            "1".into(),
            "--vocab_min_freq".into(),
            "1".into(),
            "--encoded_cache".into(),
            cache.to_str().unwrap().into(),
        ]
    };
    let first = bin().args(args("out1")).output().unwrap();
    assert_eq!(code(&first), 0, "stderr: {}", String::from_utf8_lossy(&first.stderr));
    assert!(cache.exists());
    let second = bin().args(args("out2")).output().unwrap();
    assert_eq!(code(&second), 0);
    assert!(String::from_utf8_lossy(&second.stdout).contains("loaded 8 encoded pairs"));
    // Same training data either way, so the checkpoints agree bit for bit.
    let a = std::fs::read(dir.path().join("out1/model.ckpt")).unwrap();
    let b = std::fs::read(dir.path().join("out2/model.ckpt")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_file_keys_match_flags() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 12);
    let config_path = dir.path().join("run.conf");
    let out_a = dir.path().join("out_a");
    let out_b = dir.path().join("out_b");
    std::fs::write(
        &config_path,
        format!(
            "data = {}\nout_dir = {}\nfraction = 0.75\nseed = 9\n",
            data.display(),
            out_a.display()
        ),
    )
    .unwrap();
    let via_file = run(&["split", "--config", config_path.to_str().unwrap()]);
    assert_eq!(code(&via_file), 0, "stderr: {}", String::from_utf8_lossy(&via_file.stderr));
    let via_flags = run(&[
        "split",
        "--data",
        data.to_str().unwrap(),
        "--out_dir",
        out_b.to_str().unwrap(),
        "--fraction",
        "0.75",
        "--seed",
        "9",
    ]);
    assert_eq!(code(&via_flags), 0);
    let a = std::fs::read(out_a.join("train.jsonl")).unwrap();
    let b = std::fs::read(out_b.join("train.jsonl")).unwrap();
    assert_eq!(a, b, "config file and flags produced different splits");
}

#[test]
fn unknown_config_key_exits_1() {
    let dir = TempDir::new().unwrap();
    let config_path = dir.path().join("run.conf");
    std::fs::write(&config_path, "no_such_key = 1\n").unwrap();
    let output = run(&["stats", "--config", config_path.to_str().unwrap()]);
    assert_eq!(code(&output), 1);
}

#[test]
fn baseline_reports_reimplemented_label() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 20);
    let out = dir.path().join("out");
    let output = run(&[
        "baseline",
        "--data",
        data.to_str().unwrap(),
        "--out_dir",
        out.to_str().unwrap(),
        "--fraction",
        "0.8",
        "--svm_epochs",
        "20",
        "--vocab_min_freq",
        "1",
    ]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert!(String::from_utf8_lossy(&output.stdout).contains("baseline: reimplemented"));
    let metrics = std::fs::read_to_string(out.join("baseline_metrics.json")).unwrap();
    assert!(metrics.contains("baseline: reimplemented"));
    assert!(out.join("svm_model.json").exists());
}

#[test]
fn version_prints_file_format_versions() {
    let output = run(&["--version"]);
    assert_eq!(code(&output), 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("checkpoint v1"), "stdout: {stdout}");
}

#[test]
fn gradcheck_passes_and_prints_errors() {
    let output = run(&["gradcheck"]);
    assert_eq!(code(&output), 0, "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("1 layer"));
    assert!(stdout.contains("2 layer"));
    assert!(stdout.contains("passed"));
}

#[test]
fn plot_regenerates_line_and_bar() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path(), 24);
    let out = dir.path().join("out");
    assert_eq!(
        code(&run(&[
            "sweep",
            "--data",
            data.to_str().unwrap(),
            "--out_dir",
            out.to_str().unwrap(),
            "--models",
            "svm",
            "--lengths",
            "16,32",
            "--fraction",
            "0.8",
            "--svm_epochs",
            "5",
            "--vocab_min_freq",
            "1",
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "hist",
            "--data",
            data.to_str().unwrap(),
            "--out_dir",
            out.to_str().unwrap(),
            "--vocab",
            out.join("vocab.txt").to_str().unwrap(),
            "--bucket_width",
            "8",
        ])),
        0
    );
    let line = run(&[
        "plot",
        "--input",
        out.join("results.json").to_str().unwrap(),
        "--kind",
        "line",
        "--out_dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&line), 0, "stderr: {}", String::from_utf8_lossy(&line.stderr));
    assert!(out.join("plot_line.svg").exists());

    let bar = run(&[
        "plot",
        "--input",
        out.join("hist.csv").to_str().unwrap(),
        "--kind",
        "bar",
        "--out_dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&bar), 0);
    assert!(out.join("plot_bar.svg").exists());

    let bad = run(&[
        "plot",
        "--input",
        out.join("hist.csv").to_str().unwrap(),
        "--kind",
        "pie",
        "--out_dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&bad), 1);
}
