use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use xmae::cli::load_records;
use xmae::config::RunConfig;
use xmae::data::{build_records, load_features, parse_embeddings, SplitDataset, SplitManifest};
use xmae::eval::mnno_report;
use xmae::mapper::load_mapper;
use xmae::numerics::Cosine;

fn xmae(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmae"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = xmae(dir, args);
    assert!(
        out.status.success(),
        "xmae {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const DATA: [&str; 6] = [
    "--features",
    "out/features.csv",
    "--embeddings",
    "out/embeddings.txt",
    "--manifest",
    "out/manifest.json",
];

/// Tiny synthetic dataset under `<tmp>/out`.
fn tiny(noise: &str, unseen: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "synth", "--out-dir", "out", "--classes", "5", "--per-class", "8", "--c", "6", "--d", "4", "--noise",
            noise, "--unseen-classes", unseen, "--seed", "2",
        ],
    );
    dir
}

fn args<'a>(head: &[&'a str], rest: &[&'a str]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend_from_slice(&DATA);
    v.extend_from_slice(rest);
    v
}

fn out(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join("out").join(name)
}

#[test]
fn synth_counts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = [
        "synth", "--classes", "20", "--per-class", "30", "--c", "64", "--d", "16", "--seed", "1",
    ];
    let a: Vec<&str> = cmd.iter().copied().chain(["--out-dir", "a"]).collect();
    let b: Vec<&str> = cmd.iter().copied().chain(["--out-dir", "b"]).collect();
    ok(dir.path(), &a);
    ok(dir.path(), &b);
    let rows = load_features(&dir.path().join("a/features.csv")).unwrap();
    assert_eq!(rows.len(), 600);
    for f in ["features.csv", "embeddings.txt", "manifest.json"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between reruns");
    }
}

#[test]
fn synth_files_reload_without_warnings() {
    let dir = tiny("0.05", "1");
    let table = parse_embeddings(&out(&dir, "embeddings.txt")).unwrap();
    assert!(table.warnings.is_empty(), "{:?}", table.warnings);
    let rows = load_features(&out(&dir, "features.csv")).unwrap();
    let records = build_records(&rows, &table.value).unwrap();
    assert!(records.warnings.is_empty(), "{:?}", records.warnings);
    let manifest = SplitManifest::load(&out(&dir, "manifest.json")).unwrap();
    let split = SplitDataset::from_manifest(&records.value, manifest).unwrap();
    assert_eq!(split.unseen.len(), 8);
}

#[test]
fn one_epoch_writes_one_history_row() {
    let dir = tiny("0.05", "0");
    let stdout = ok(
        dir.path(),
        &args(&["train", "--out-dir", "out", "--z", "2"], &["--epochs", "1", "--weights", "1,0,0,0"]),
    );
    assert!(stdout.contains("best validation loss"), "{stdout}");
    let history = std::fs::read_to_string(out(&dir, "history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines.len(), 2, "{history}");
    assert!(lines[0].starts_with("epoch,train_loss,val_loss,recons,joint,cross,rank"));
    assert!(out(&dir, "model.bin").exists());
}

#[test]
fn config_copy_replays_the_run() {
    let dir = tiny("0.05", "0");
    ok(dir.path(), &args(&["train", "--out-dir", "out", "--z", "2"], &["--epochs", "2"]));
    let first = std::fs::read(out(&dir, "model.bin")).unwrap();
    std::fs::rename(out(&dir, "config-train.txt"), dir.path().join("replay.txt")).unwrap();
    std::fs::remove_file(out(&dir, "model.bin")).unwrap();
    ok(dir.path(), &["train", "--config", "replay.txt"]);
    assert_eq!(std::fs::read(out(&dir, "model.bin")).unwrap(), first);
}

#[test]
fn eval_table_has_one_column_per_n() {
    let dir = tiny("0.05", "1");
    ok(dir.path(), &args(&["train", "--out-dir", "out", "--z", "2"], &["--epochs", "3"]));
    let table = ok(
        dir.path(),
        &args(&["eval", "--out-dir", "out"], &["--model", "out/model.bin", "--eval-n", "1,3,5"]),
    );
    let header = table.lines().nth(1).unwrap();
    assert_eq!(header.split_whitespace().collect::<Vec<_>>(), ["split", "records", "top-1", "top-3", "top-5"]);
    assert!(table.contains("seen") && table.contains("unseen"), "{table}");
    let csv = std::fs::read_to_string(out(&dir, "report.csv")).unwrap();
    let values: Vec<f64> = csv
        .lines()
        .filter(|l| l.starts_with("accuracy") && l.contains(",top-"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 6);
    assert!(values.iter().all(|a| (0.0..=1.0).contains(a)));
}

#[test]
fn eval_with_larger_vocabulary_mirrors_the_table_header() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["synth", "--out-dir", "out", "--classes", "32", "--per-class", "4", "--c", "6", "--d", "4"],
    );
    ok(dir.path(), &args(&["train", "--out-dir", "out", "--z", "2"], &["--epochs", "1"]));
    let table = ok(
        dir.path(),
        &args(&["eval", "--out-dir", "out"], &["--model", "out/model.bin", "--eval-n", "5,10,30"]),
    );
    let header = table.lines().nth(1).unwrap();
    assert_eq!(header.split_whitespace().collect::<Vec<_>>(), ["split", "records", "top-5", "top-10", "top-30"]);
}

#[test]
fn noise_free_data_is_retrieved_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["synth", "--out-dir", "out", "--classes", "5", "--per-class", "12", "--c", "16", "--d", "8", "--noise", "0"],
    );
    ok(
        dir.path(),
        &args(
            &["train", "--out-dir", "out", "--z", "4", "--video-hidden", "32,16", "--text-hidden", "16,8"],
            &["--epochs", "200", "--batch-size", "8", "--dropout", "0", "--weights", "1,0,1,0"],
        ),
    );
    ok(
        dir.path(),
        &args(&["eval", "--out-dir", "out"], &["--model", "out/model.bin", "--eval-n", "1"]),
    );
    let csv = std::fs::read_to_string(out(&dir, "report.csv")).unwrap();
    assert!(csv.contains("accuracy,seen,top-1,1\n"), "{csv}");
}

#[test]
fn eval_reports_both_dims_on_mismatch() {
    let dir = tiny("0.05", "0");
    ok(dir.path(), &args(&["train", "--out-dir", "out", "--z", "2"], &["--epochs", "1"]));
    ok(
        dir.path(),
        &["synth", "--out-dir", "wide", "--classes", "5", "--per-class", "8", "--c", "7", "--d", "4"],
    );
    let res = xmae(
        dir.path(),
        &[
            "eval", "--out-dir", "out", "--model", "out/model.bin", "--features", "wide/features.csv", "--embeddings",
            "wide/embeddings.txt", "--manifest", "wide/manifest.json", "--eval-n", "1",
        ],
    );
    assert_eq!(res.status.code(), Some(1));
    let err = stderr(&res);
    assert!(err.contains('6') && err.contains('7'), "{err}");
}

#[test]
fn mnno_reports_four_rows_matching_the_library() {
    let dir = tiny("0.05", "0");
    let train = |kind: &str| {
        ok(
            dir.path(),
            &args(&["train", "--out-dir", "out", "--z", "2"], &["--epochs", "2", "--model-kind", kind]),
        )
    };
    train("ae");
    train("ff");
    let table = ok(
        dir.path(),
        &args(
            &["mnno", "--out-dir", "out"],
            &["--model", "out/model.bin", "--baseline", "out/baseline.bin", "--mnno-k", "2"],
        ),
    );
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 4, "{table}");
    assert!(rows[0].starts_with("ff") && rows[2].starts_with("autoencoder"), "{table}");

    let cfg = RunConfig {
        features: Some(out(&dir, "features.csv")),
        embeddings: Some(out(&dir, "embeddings.txt")),
        ..RunConfig::default()
    };
    let (records, _) = load_records(&cfg).unwrap();
    let split = SplitDataset::from_manifest(&records, SplitManifest::load(&out(&dir, "manifest.json")).unwrap()).unwrap();
    let csv = std::fs::read_to_string(out(&dir, "report.csv")).unwrap();
    for artifact in ["baseline.bin", "model.bin"] {
        let mapper = load_mapper(&out(&dir, artifact)).unwrap();
        for row in mnno_report(mapper.as_ref(), &split.test, 2, &Cosine).unwrap() {
            let name = format!("{} {}", row.mapper, row.direction.label());
            assert!(csv.contains(&format!("mnno,{name},\"X,f(X)\",{}\n", row.x_fx)), "{csv}");
            assert!(csv.contains(&format!("mnno,{name},\"Y,f(X)\",{}\n", row.y_fx)), "{csv}");
        }
    }
}

#[test]
fn mnno_fixture_files() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, degrees: &[f64]| {
        let text: String = ["cat", "dog", "tiger", "lion", "mouse"]
            .iter()
            .zip(degrees)
            .map(|(w, a)| format!("{w} {} {}\n", a.to_radians().cos(), a.to_radians().sin()))
            .collect();
        std::fs::write(dir.path().join(name), text).unwrap();
    };
    write("v.txt", &[0.0, 10.0, 20.0, 30.0, 100.0]);
    write("z.txt", &[100.0, 0.0, 60.0, 45.0, 90.0]);
    let fixture = ["mnno", "--out-dir", "out", "--mnno-k", "3", "--set-a", "v.txt"];
    ok(dir.path(), &[&fixture[..], &["--set-b", "z.txt"]].concat());
    let csv = std::fs::read_to_string(dir.path().join("out/mnno.csv")).unwrap();
    let value: f64 = csv.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(value, 2.0 / 3.0);

    // identical modalities overlap completely
    ok(dir.path(), &[&fixture[..], &["--set-b", "v.txt"]].concat());
    let csv = std::fs::read_to_string(dir.path().join("out/mnno.csv")).unwrap();
    assert!(csv.ends_with(",1\n"), "{csv}");
}

#[test]
fn mnno_without_artifacts_names_them() {
    let dir = tiny("0.05", "0");
    let res = xmae(dir.path(), &args(&["mnno", "--out-dir", "out"], &[]));
    assert_eq!(res.status.code(), Some(1));
    let err = stderr(&res);
    assert!(err.contains("'model'") && err.contains("'baseline'"), "{err}");

    let res = xmae(dir.path(), &args(&["mnno", "--out-dir", "out"], &["--model", "out/missing.bin"]));
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("missing.bin"));
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let res = xmae(dir.path(), &["train", "--no-such-flag", "1"]);
    assert_eq!(res.status.code(), Some(1));

    std::fs::write(dir.path().join("bad.txt"), "epochs = 3\nlearning_rte = 0.1\n").unwrap();
    let res = xmae(dir.path(), &["train", "--config", "bad.txt"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("learning_rte"), "{}", stderr(&res));

    // every problem is listed, not just the first
    let res = xmae(dir.path(), &["train", "--dropout", "1.5", "--batch-size", "0"]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr(&res);
    assert!(err.contains("dropout") && err.contains("batch_size"), "{err}");
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let res = xmae(dir.path(), &["synth", "--out-dir", "blocker/out"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn zero_shot_overlap_is_rejected() {
    let dir = tiny("0.05", "1");
    ok(dir.path(), &args(&["train", "--out-dir", "out", "--z", "2"], &["--epochs", "1"]));
    // a manifest whose unseen split reuses a training class
    let mut manifest = SplitManifest::load(&out(&dir, "manifest.json")).unwrap();
    let leaked = manifest.train[0];
    manifest.train.retain(|&id| id != leaked);
    manifest.unseen.push(leaked);
    manifest.save(&dir.path().join("leak.json")).unwrap();
    let res = xmae(
        dir.path(),
        &[
            "eval", "--out-dir", "out", "--model", "out/model.bin", "--features", "out/features.csv", "--embeddings",
            "out/embeddings.txt", "--manifest", "leak.json", "--eval-n", "1",
        ],
    );
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("class"), "{}", stderr(&res));
}

#[test]
fn inspect_prints_the_header() {
    let dir = tiny("0.05", "0");
    ok(dir.path(), &args(&["train", "--out-dir", "out", "--z", "2"], &["--epochs", "1"]));
    let text = ok(dir.path(), &["inspect", "--model", "out/model.bin"]);
    assert!(text.contains("\"kind\": \"autoencoder\""), "{text}");
    assert!(text.contains("parameters:"), "{text}");
}
