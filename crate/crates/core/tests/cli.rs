use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "[harness]\ntest_states = 5\n\n[sync]\ntotal_samples = 2000\ncheckpoint_every = 1000\n\n[replay]\ncapacity = 1000\npretrain_steps = 2000\n";

fn mrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrl")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.display().to_string()
}

fn manifest_keys(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = ").map(|(k, _)| k.to_string()))
        .collect()
}

#[test]
fn missing_config_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml").display().to_string();
    let out = mrl(&[
        "pretrain",
        "--config",
        &missing,
        "--out",
        &tmp.path().display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("mrl: "));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "[harness]\nbogus = 1\n").unwrap();
    let out = mrl(&[
        "pretrain",
        "--config",
        path.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_weights_are_a_checkpoint_error() {
    let tmp = tempfile::tempdir().unwrap();
    let weights = tmp.path().join("broken.weights");
    std::fs::write(&weights, "not a checkpoint\n").unwrap();
    let out = mrl(&[
        "test",
        "--config",
        &small_config(tmp.path()),
        "--weights",
        weights.to_str().unwrap(),
        "--out",
        tmp.path().join("t").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bad_flag_is_rejected() {
    assert!(!mrl(&["retrain", "--approach", "nonsense"]).status.success());
    assert!(!mrl(&["fly"]).status.success());
}

#[test]
fn pretrain_then_retrain_writes_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let pre = tmp.path().join("pre");
    let out = mrl(&[
        "pretrain",
        "--seed",
        "3",
        "--agents",
        "2",
        "--config",
        &cfg,
        "--out",
        pre.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "pretrain.csv",
        "pretrain_trials.csv",
        "inference.csv",
        "manifest.txt",
        "config.toml",
    ] {
        assert!(pre.join(f).is_file(), "missing {f}");
    }
    assert!(std::fs::read_dir(pre.join("pretrained")).unwrap().count() > 0);
    let keys = manifest_keys(&pre);
    for k in ["tool", "version", "config_sha256", "scale"] {
        assert!(keys.iter().any(|x| x == k), "manifest lacks {k}");
    }

    let re = tmp.path().join("re");
    let out = mrl(&[
        "retrain",
        "--seed",
        "3",
        "--agents",
        "2",
        "--config",
        &cfg,
        "--c",
        "2",
        "--pretrained",
        pre.join("pretrained").to_str().unwrap(),
        "--out",
        re.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["results.csv", "agents.csv", "trials.csv", "manifest.txt", "config.toml"] {
        assert!(re.join(f).is_file(), "missing {f}");
    }
    assert_eq!(std::fs::read_dir(re.join("weights")).unwrap().count(), 2);
    assert_eq!(std::fs::read_dir(re.join("crossbars")).unwrap().count(), 2);

    let agents = std::fs::read_to_string(re.join("agents.csv")).unwrap();
    assert_eq!(agents.lines().count(), 3);
}

#[test]
fn written_config_reloads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    assert!(mrl(&[
        "pretrain",
        "--agents",
        "1",
        "--config",
        &cfg,
        "--out",
        a.to_str().unwrap()
    ])
    .status
    .success());
    let echoed = a.join("config.toml");
    let b = tmp.path().join("b");
    assert!(mrl(&[
        "pretrain",
        "--agents",
        "1",
        "--config",
        echoed.to_str().unwrap(),
        "--out",
        b.to_str().unwrap()
    ])
    .status
    .success());
    assert_eq!(
        std::fs::read(a.join("inference.csv")).unwrap(),
        std::fs::read(b.join("inference.csv")).unwrap()
    );
}
