use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn segnoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segnoise"))
        .args(args)
        .env_remove("SEGNOISE_OUT_DIR")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = segnoise(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "[data.phantom]\ncount = 8\nseed = 5\n\n[data.phantom.spec]\ndepth = 4\nheight = 40\nwidth = 40\n\
radius_min = 4.0\nradius_max = 7.0\nmargin = 5\n\n[folds]\nn_folds = 2\ntrain = 4\nval = 1\ntest = 3\n\n\
[train]\nepochs = 10\n";

fn setup() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let data = tmp.path().join("data");
    ok(&["--config", s(&cfg), "phantom", "--out", s(&data)]);
    (tmp, cfg, data)
}

fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn phantom_writes_reproducible_bundles() {
    let (tmp, cfg, data) = setup();
    let dirs: Vec<_> = fs::read_dir(&data).unwrap().collect();
    assert_eq!(dirs.len(), 8);
    for d in fs::read_dir(&data).unwrap() {
        let d = d.unwrap().path();
        for f in ["meta.json", "mask.raw", "T1c.raw", "FLAIR.raw"] {
            assert!(d.join(f).is_file(), "{} missing {f}", d.display());
        }
    }
    let again = tmp.path().join("again");
    ok(&["--config", s(&cfg), "phantom", "--out", s(&again)]);
    assert_eq!(snapshot(&data), snapshot(&again));
}

#[test]
fn invalid_phantom_spec_names_the_constraint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[data.phantom.spec]\nradius_max = 50.0\n").unwrap();
    let out = segnoise(&["--config", s(&cfg), "phantom", "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("radius_max"), "{err}");
}

#[test]
fn config_schema_is_enforced() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("typo.toml");
    fs::write(&cfg, "[sweep]\nrepetitionz = 3\n").unwrap();
    let out = segnoise(&["--config", s(&cfg), "oracle", "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());

    let emitted = ok(&["--emit-default-config"]);
    let path = tmp.path().join("default.toml");
    fs::write(&path, &emitted.stdout).unwrap();
    let out = segnoise(&["--config", s(&path), "gradcheck", "--trials", "2", "--out", s(&tmp.path().join("g"))]);
    assert!(out.status.success());
}

#[test]
fn corrupt_zero_variance_is_identity_and_inputs_survive() {
    let (tmp, cfg, data) = setup();
    let before = snapshot(&data);
    let out = tmp.path().join("c0");
    ok(&["--config", s(&cfg), "corrupt", "--data", s(&data), "--sigma2", "0", "--out", s(&out)]);
    for d in fs::read_dir(&data).unwrap() {
        let d = d.unwrap().path();
        let name = d.file_name().unwrap();
        assert_eq!(
            fs::read(d.join("mask.raw")).unwrap(),
            fs::read(out.join("bundles").join(name).join("mask.raw")).unwrap()
        );
    }
    assert_eq!(before, snapshot(&data));

    let inside = data.join("nested");
    assert!(!segnoise(&["--config", s(&cfg), "corrupt", "--data", s(&data), "--out", s(&inside)])
        .status
        .success());
    assert!(!inside.exists());
}

#[test]
fn dilation_grows_masks() {
    let (tmp, cfg, data) = setup();
    let out = tmp.path().join("c3");
    ok(&[
        "--config", s(&cfg), "corrupt", "--data", s(&data), "--mode", "dilate", "--sigma2", "3", "--out", s(&out),
    ]);
    let rows = csv_rows(&out.join("corruption.csv"));
    let ds: Vec<f64> = rows.iter().filter_map(|r| r[7].parse().ok()).collect();
    assert!(!ds.is_empty());
    let mean = ds.iter().sum::<f64>() / ds.len() as f64;
    assert!(mean > 1.0, "mean size change {mean}");
}

#[test]
fn eroding_empty_masks_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.toml");
    fs::write(&cfg, SMALL.replace("margin = 5\n", "margin = 5\nblobs_min = 0\nblobs_max = 0\n")).unwrap();
    let out = tmp.path().join("c");
    ok(&["--config", s(&cfg), "corrupt", "--mode", "erode", "--sigma2", "5", "--out", s(&out)]);
    let rows = csv_rows(&out.join("corruption.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[7].is_empty() && r[6] == *"0"));
    for d in fs::read_dir(out.join("bundles")).unwrap() {
        assert!(fs::read(d.unwrap().path().join("mask.raw")).unwrap().iter().all(|&v| v == 0));
    }
}

#[test]
fn oracle_at_zero_variance_is_flat() {
    let (tmp, cfg, data) = setup();
    let out = tmp.path().join("o");
    ok(&[
        "--config", s(&cfg), "oracle", "--data", s(&data), "--sigma2", "0", "--repetitions", "2", "--out", s(&out),
    ]);
    let rows = csv_rows(&out.join("oracle_curve.csv"));
    assert_eq!(rows.len(), 3 * 3);
    assert!(rows.iter().all(|r| &r[3] == "1"));
    assert!(out.join("oracle_dice.svg").is_file());
    assert_eq!(csv_rows(&out.join("oracle_scores.csv")).len(), 3 * 2 * 3);
}

#[test]
fn gridsearch_emits_grid_and_heatmap() {
    let (tmp, cfg, data) = setup();
    let out = tmp.path().join("g");
    ok(&[
        "--config", s(&cfg), "gridsearch", "--data", s(&data), "--beta", "0.4,1", "--sigma2", "0", "--seeds", "0,1",
        "--out", s(&out),
    ]);
    let rows = csv_rows(&out.join("grid.csv"));
    assert_eq!(rows.len(), 4);
    assert!(out.join("grid_heatmap.svg").is_file());
    assert_eq!(csv_rows(&out.join("grid_scores.csv")).len(), 2 * 3);
}

#[test]
fn gradcheck_defaults_pass_and_tiny_eps_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&["gradcheck", "--out", s(&tmp.path().join("a"))]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    assert_eq!(csv_rows(&tmp.path().join("a/gradcheck.csv")).len(), 100 * 4);

    let out = segnoise(&["gradcheck", "--eps", "1e-12", "--trials", "3", "--out", s(&tmp.path().join("b"))]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cancellation"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative error"));
}

#[test]
fn score_matches_identical_bundles_perfectly() {
    let (tmp, _cfg, data) = setup();
    let out = tmp.path().join("s");
    ok(&["score", "--prediction", s(&data), "--target", s(&data), "--out", s(&out)]);
    let rows = csv_rows(&out.join("scores.csv"));
    assert_eq!(rows.len(), 2 * 8 + 2);
    assert!(rows.iter().all(|r| &r[2] == "1" && &r[3] == "1" && &r[4] == "1"));
}

#[test]
fn output_dir_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let target = tmp.path().join("from-env");
    let status = Command::new(env!("CARGO_BIN_EXE_segnoise"))
        .args(["gradcheck", "--trials", "1"])
        .env("SEGNOISE_OUT_DIR", &target)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(target.join("gradcheck.csv").is_file());
}
