use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sleepnet_core::neuralnet::save_checkpoint;
use sleepnet_core::records::{load_record, save_record};
use sleepnet_core::{ConvNet, ModelConfig, EPOCH_SAMPLES};

const SMALL_MODEL: &[&str] = &[
    "model.n_blocks=2",
    "model.kernel_size=7",
    "model.initial_filters=8",
    "model.batch_size=32",
];

fn sleepnet(dir: &Path, args: &[&str], sets: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sleepnet"));
    cmd.current_dir(dir).arg("--quiet").args(args);
    for s in ["data.raw_dir=raw", "output.dir=out"].iter().chain(sets) {
        cmd.arg("--set").arg(s);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A temporary experiment directory with synthetic raw records.
fn fixture(records: &str, epochs: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sleepnet"))
        .current_dir(dir.path())
        .args(["synth", "--out", "raw", "--records", records, "--epochs", &epochs.to_string()])
        .output()
        .unwrap();
    ok(&out);
    dir
}

fn preprocessed(records: &str, epochs: usize) -> tempfile::TempDir {
    let dir = fixture(records, epochs);
    ok(&sleepnet(dir.path(), &["preprocess"], &[]));
    dir
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn with(base: &[&'static str], extra: &[&'static str]) -> Vec<&'static str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn preprocess_writes_store_and_stats() {
    let dir = fixture("1,1,1", 12);
    ok(&sleepnet(dir.path(), &["preprocess"], &[]));
    let out = dir.path().join("out");
    for split in ["train", "val", "test"] {
        let records: Vec<_> = std::fs::read_dir(out.join("store").join(split)).unwrap().collect();
        assert_eq!(records.len(), 1, "{split}");
    }
    let stats = read(out.join("norm_stats.txt"));
    assert_eq!(String::from_utf8_lossy(&stats).lines().count(), 5);
    let record = load_record(out.join("store/val/val000")).unwrap();
    assert!(record.channels.values().all(|c| c.rate == 125.0));

    ok(&sleepnet(dir.path(), &["preprocess"], &[]));
    assert_eq!(read(out.join("norm_stats.txt")), stats, "stats regenerated differently");

    // Changing a test record must not move the statistics.
    let test_dir = dir.path().join("raw/test/test000");
    let mut rec = load_record(&test_dir).unwrap();
    for ch in rec.channels.values_mut() {
        ch.samples.iter_mut().for_each(|v| *v = *v * 3.0 + 10.0);
    }
    save_record(&rec, &test_dir).unwrap();
    ok(&sleepnet(dir.path(), &["preprocess"], &[]));
    assert_eq!(read(out.join("norm_stats.txt")), stats);
}

#[test]
fn preprocess_reports_failed_records() {
    let dir = fixture("2,1,1", 6);
    std::fs::write(dir.path().join("raw/train/train001/stages"), "0\n9\n").unwrap();
    let out = sleepnet(dir.path(), &["preprocess"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("train001"), "{}", stderr(&out));
    assert!(dir.path().join("out/store/train/train000").is_dir());
    assert!(dir.path().join("out/norm_stats.txt").is_file());
}

#[test]
fn overlapping_splits_are_rejected() {
    let dir = fixture("1,1,1", 4);
    let raw = dir.path().join("raw");
    std::fs::rename(raw.join("test/test000"), raw.join("test/train000")).unwrap();
    let out = sleepnet(dir.path(), &["preprocess"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("train000"));
}

#[test]
fn train_overfits_small_dataset() {
    let dir = preprocessed("4,1,1", 50);
    let sets = with(
        SMALL_MODEL,
        &["model.learning_rate=1e-2", "model.dropout_rate=0.1", "train.max_epochs=30"],
    );
    let stdout = ok(&sleepnet(dir.path(), &["train"], &sets));
    assert!(dir.path().join("out/model.ckpt").is_file());
    let acc: f64 = stdout
        .split("train accuracy ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("no accuracy in {stdout}"));
    assert!(acc >= 0.99, "train accuracy {acc}");
}

#[test]
fn training_twice_gives_identical_history() {
    let dir = preprocessed("2,1,1", 10);
    let sets = with(SMALL_MODEL, &["train.max_epochs=3", "seed=4"]);
    ok(&sleepnet(dir.path(), &["train"], &sets));
    let first = read(dir.path().join("out/history.csv"));
    let ckpt = read(dir.path().join("out/model.ckpt"));
    ok(&sleepnet(dir.path(), &["train"], &sets));
    assert_eq!(read(dir.path().join("out/history.csv")), first);
    assert_eq!(read(dir.path().join("out/model.ckpt")), ckpt);
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 4);
}

#[test]
fn train_without_stats_fails_before_training() {
    let dir = preprocessed("2,1,1", 4);
    std::fs::remove_file(dir.path().join("out/norm_stats.txt")).unwrap();
    let out = sleepnet(dir.path(), &["train"], SMALL_MODEL);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("norm_stats.txt"), "{}", stderr(&out));
    assert!(!dir.path().join("out/history.csv").exists());
}

#[test]
fn diverging_training_exits_with_numerical_status() {
    let dir = preprocessed("2,1,1", 4);
    let sets = with(SMALL_MODEL, &["model.learning_rate=1e38", "train.max_epochs=5"]);
    let out = sleepnet(dir.path(), &["train"], &sets);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("numerical failure"));
}

const TINY_SEARCH: &[&str] = &[
    "train.max_epochs=1",
    "hpo.space.n_blocks=[1, 2]",
    "hpo.space.kernel_size=[3, 9]",
    "hpo.space.initial_filters=[8]",
    "hpo.tpe.n_startup=4",
];

#[test]
fn hpo_logs_resumes_and_feeds_scatter() {
    let dir = preprocessed("4,1,1", 5);
    let log = dir.path().join("out/hpo/trials.csv");

    ok(&sleepnet(dir.path(), &["hpo"], &with(TINY_SEARCH, &["hpo.n_trials=8"])));
    let full = String::from_utf8(read(&log)).unwrap();
    assert_eq!(full.lines().count(), 9);
    assert!(full.starts_with("trial,n_blocks,kernel,filters,lr,status,kappa,seconds\n"));
    let members = String::from_utf8(read(dir.path().join("out/hpo/best_configs.toml"))).unwrap();
    assert_eq!(members.matches("[[member]]").count(), 5);

    ok(&sleepnet(dir.path(), &["hpo"], &with(TINY_SEARCH, &["hpo.n_trials=3"])));
    let partial = String::from_utf8(read(&log)).unwrap();
    assert_eq!(partial.lines().count(), 4);
    ok(&sleepnet(dir.path(), &["hpo", "--resume"], &with(TINY_SEARCH, &["hpo.n_trials=8"])));
    let resumed = String::from_utf8(read(&log)).unwrap();
    assert!(resumed.starts_with(&partial));
    assert_eq!(resumed, full);

    ok(&sleepnet(dir.path(), &["report", "--scatter"], &[]));
    let scatter = String::from_utf8(read(dir.path().join("out/report/scatter.csv"))).unwrap();
    let rows: Vec<&str> = scatter.lines().collect();
    assert_eq!(rows[0], "trial,n_blocks,kernel,filters,ln_lr,kappa");
    let completed = full.lines().filter(|l| l.contains(",completed,")).count();
    assert_eq!(rows.len() - 1, completed);
    for (row, logged) in rows[1..].iter().zip(full.lines().skip(1).filter(|l| l.contains(",completed,"))) {
        let a: Vec<&str> = row.split(',').collect();
        let b: Vec<&str> = logged.split(',').collect();
        assert_eq!(&a[..4], &b[..4]);
        let lr: f64 = b[4].parse().unwrap();
        assert!((a[4].parse::<f64>().unwrap() - lr.ln()).abs() < 1e-5);
    }
}

/// Saves `k` small untrained networks and returns their paths relative to
/// the output directory.
fn members(dir: &Path, k: usize) -> Vec<String> {
    let ckpts = dir.join("out/members");
    std::fs::create_dir_all(&ckpts).unwrap();
    (0..k)
        .map(|i| {
            let cfg = ModelConfig::new(1 + i % 2, 3 + i, 8, 1e-3);
            let net = ConvNet::<f32>::new(&cfg, i as u64, 5, EPOCH_SAMPLES).unwrap();
            save_checkpoint(&net, ckpts.join(format!("m{i}.ckpt"))).unwrap();
            format!("members/m{i}.ckpt")
        })
        .collect()
}

fn member_list(paths: &[String]) -> String {
    let quoted: Vec<String> = paths.iter().map(|p| format!("\"{p}\"")).collect();
    format!("predict.members=[{}]", quoted.join(", "))
}

fn predict_with(dir: &Path, paths: &[String]) -> Vec<u8> {
    let list = member_list(paths);
    ok(&sleepnet(dir, &["predict", "--records", "test000"], &[list.as_str()]));
    read(dir.join("out/predictions/test000.hyp"))
}

#[test]
fn ensemble_prediction_writes_full_hypnogram() {
    let dir = preprocessed("1,1,1", 120);
    let paths = members(dir.path(), 5);
    let hyp = predict_with(dir.path(), &paths);
    let text = String::from_utf8(hyp.clone()).unwrap();
    assert_eq!(text.lines().count(), 120);
    assert!(text.lines().enumerate().all(|(i, l)| l.starts_with(&format!("{i} "))));

    let mut shuffled = paths.clone();
    shuffled.reverse();
    shuffled.swap(0, 2);
    assert_eq!(predict_with(dir.path(), &shuffled), hyp);

    let votes = String::from_utf8(read(dir.path().join("out/predictions/test000.votes.csv"))).unwrap();
    for row in votes.lines().skip(1) {
        let n: usize = row.split(',').skip(2).map(|v| v.parse::<usize>().unwrap()).sum();
        assert_eq!(n, 5);
    }
}

#[test]
fn single_member_ensemble_is_that_model() {
    let dir = preprocessed("1,1,1", 8);
    let paths = members(dir.path(), 2);
    let single = String::from_utf8(predict_with(dir.path(), &paths[..1])).unwrap();
    let probs = String::from_utf8(read(dir.path().join("out/predictions/test000.members.csv"))).unwrap();
    for (hyp, row) in single.lines().zip(probs.lines().skip(1)) {
        let f: Vec<&str> = row.split(',').collect();
        let p: Vec<f64> = f[3..].iter().map(|v| v.parse().unwrap()).collect();
        let arg = (0..5).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        assert_eq!(hyp.split_whitespace().nth(1).unwrap(), ["W", "N1", "N2", "N3", "REM"][arg]);
        assert_eq!(f[2], hyp.split_whitespace().nth(1).unwrap());
    }
}

#[test]
fn mismatched_checkpoint_is_named() {
    let dir = preprocessed("1,1,1", 4);
    let mut paths = members(dir.path(), 2);
    let odd = ConvNet::<f32>::new(&ModelConfig::new(1, 3, 8, 1e-3), 0, 5, 64).unwrap();
    save_checkpoint(&odd, dir.path().join("out/members/odd.ckpt")).unwrap();
    std::fs::write(dir.path().join("out/members/broken.ckpt"), b"SLEEPNET-CHECKPOINT 1\n{}").unwrap();
    for bad in ["members/odd.ckpt", "members/broken.ckpt"] {
        paths.push(bad.to_string());
        let list = member_list(&paths);
        let out = sleepnet(dir.path(), &["predict"], &[list.as_str()]);
        assert_eq!(out.status.code(), Some(2));
        assert!(stderr(&out).contains(bad), "{}", stderr(&out));
        paths.pop();
    }
}

fn write_truth_hypnograms(dir: &Path) {
    let store = dir.join("out/store/test");
    std::fs::create_dir_all(dir.join("out/predictions")).unwrap();
    for entry in std::fs::read_dir(store).unwrap() {
        let rec = load_record(entry.unwrap().path()).unwrap();
        let text: String = rec.annotations.iter().enumerate().map(|(i, s)| format!("{i} {s}\n")).collect();
        std::fs::write(dir.join(format!("out/predictions/{}.hyp", rec.id)), text).unwrap();
    }
}

#[test]
fn evaluation_of_perfect_predictions() {
    let dir = preprocessed("1,1,2", 10);
    write_truth_hypnograms(dir.path());
    let table = ok(&sleepnet(dir.path(), &["evaluate"], &[]));
    let eval = dir.path().join("out/evaluation");
    let json = String::from_utf8(read(eval.join("report.json"))).unwrap();
    let report = sleepnet_core::evaluate::MetricsReport::from_json(&json).unwrap();
    assert_eq!(report.kappa, 1.0);
    assert_eq!(report.per_record_kappa.len(), 2);
    assert_eq!(report.confusion.total(), 20);
    let confusion = String::from_utf8(read(eval.join("confusion.csv"))).unwrap();
    assert_eq!(confusion.lines().count(), 6);
    assert_eq!(read(eval.join("table.txt")), table.as_bytes());

    let rows: Vec<&str> = table.lines().collect();
    for (row, name) in rows[1..6].iter().zip(["W", "N1", "N2", "N3", "REM"]) {
        assert!(row.starts_with(name), "{row}");
    }
    assert!(rows[6].starts_with("average"));
    let cols = |r: &str| -> Vec<f64> { r.split_whitespace().skip(1).take(3).map(|v| v.parse().unwrap()).collect() };
    for c in 0..3 {
        let mean = rows[1..6].iter().map(|r| cols(r)[c]).sum::<f64>() / 5.0;
        assert!((cols(rows[6])[c] - mean).abs() < 0.006);
    }
}

#[test]
fn evaluation_reports_misaligned_records() {
    let dir = preprocessed("1,1,2", 6);
    write_truth_hypnograms(dir.path());
    let hyp = dir.path().join("out/predictions/test001.hyp");
    std::fs::write(&hyp, "0 W\n1 N1\n").unwrap();
    let out = sleepnet(dir.path(), &["evaluate"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("test001") && !err.contains("record test000"), "{err}");
}

#[test]
fn configuration_errors_exit_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = sleepnet(dir.path(), &["config"], &["model.no_such_key=1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = sleepnet(dir.path(), &["config"], &["model.kernel_size=99"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("kernel_size"));
    let out = Command::new(env!("CARGO_BIN_EXE_sleepnet")).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let file: PathBuf = dir.path().join("exp.toml");
    std::fs::write(&file, "seed = 9\n[model]\nkernel_size = 11\n[train]\npatience = 4\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sleepnet"))
        .current_dir(dir.path())
        .args(["config", "--config", "exp.toml", "--set", "train.patience=6"])
        .output()
        .unwrap();
    let text = ok(&out);
    let cfg: toml::Table = toml::from_str(&text).unwrap();
    assert_eq!(cfg["seed"].as_integer(), Some(9));
    assert_eq!(cfg["model"]["kernel_size"].as_integer(), Some(11));
    assert_eq!(cfg["model"]["n_blocks"].as_integer(), Some(7));
    assert_eq!(cfg["train"]["patience"].as_integer(), Some(6));
}

#[test]
fn every_command_documents_config_keys() {
    for cmd in ["preprocess", "train", "hpo", "predict", "evaluate", "report"] {
        let out = Command::new(env!("CARGO_BIN_EXE_sleepnet")).args([cmd, "--help"]).output().unwrap();
        let help = ok(&out);
        for key in ["raw_dir", "notch_hz", "highpass_hz", "n_blocks", "learning_rate", "patience", "n_trials", "top_k", "members"] {
            assert!(help.contains(key), "`{cmd} --help` lacks {key}");
        }
    }
}
