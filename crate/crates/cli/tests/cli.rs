//! Command-level behavior: exit codes, determinism, manifests, sweep
//! resumability. Everything runs on a small synthetic dataset written
//! through the same IDX reader/writer the real files use.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dmf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dmf"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    dmf().args(args).current_dir(cwd).output().expect("spawn dmf")
}

fn make_data(dir: &Path, n_train: usize, n_test: usize) -> PathBuf {
    let data = dir.join("data");
    let out = run(
        &[
            "synth",
            "--out",
            data.to_str().unwrap(),
            "--train-n",
            &n_train.to_string(),
            "--test-n",
            &n_test.to_string(),
            "--seed",
            "11",
        ],
        dir,
    );
    assert!(out.status.success());
    data
}

#[test]
fn train_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_data(dir.path(), 200, 80);
    let args = |out: &str| {
        vec![
            "train".to_string(),
            "--scheme".into(),
            "dmf".into(),
            "--damage".into(),
            "0.3".into(),
            "--seed".into(),
            "7".into(),
            "--epochs".into(),
            "2".into(),
            "--batch-size".into(),
            "50".into(),
            "--data-dir".into(),
            data.display().to_string(),
            "--out".into(),
            out.into(),
        ]
    };
    for out in ["a", "b"] {
        let argv: Vec<String> = args(out);
        let argrefs: Vec<&str> = argv.iter().map(|s| s.as_str()).collect();
        assert!(run(&argrefs, dir.path()).status.success());
    }
    let a = dir.path().join("a/dmf_0.3_both");
    let b = dir.path().join("b/dmf_0.3_both");
    for file in ["curve.csv", "checkpoint.dmf"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}

#[test]
fn eval_reproduces_final_curve_row_and_is_stateless() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_data(dir.path(), 200, 80);
    let out = run(
        &[
            "train", "--scheme", "imf", "--damage", "0.5", "--seed", "3", "--epochs", "2",
            "--batch-size", "50", "--data-dir", data.to_str().unwrap(), "--out", "runs",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let run_dir = dir.path().join("runs/imf_0.5_both");
    let curve = std::fs::read_to_string(run_dir.join("curve.csv")).unwrap();
    let last = curve.lines().last().unwrap();
    let final_err: f64 = last.split(',').nth(2).unwrap().parse().unwrap();

    let eval_out = run(
        &[
            "eval",
            "--checkpoint",
            run_dir.join("checkpoint.dmf").to_str().unwrap(),
            "--data-dir",
            data.to_str().unwrap(),
            "--damage",
            "0.5",
            "--modality",
            "both",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert!(eval_out.status.success());
    let text = String::from_utf8(eval_out.stdout).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["error"].as_f64().unwrap(), final_err);
    assert_eq!(json["scheme"], "imf");
    assert!(run_dir.join("result.json").exists());

    // Independent evaluations carry no state between calls.
    let left = run(
        &[
            "eval",
            "--checkpoint",
            run_dir.join("checkpoint.dmf").to_str().unwrap(),
            "--data-dir",
            data.to_str().unwrap(),
            "--modality",
            "left",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    let right_then_left = run(
        &[
            "eval",
            "--checkpoint",
            run_dir.join("checkpoint.dmf").to_str().unwrap(),
            "--data-dir",
            data.to_str().unwrap(),
            "--modality",
            "left",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert_eq!(left.stdout, right_then_left.stdout);
}

#[test]
fn manifest_replay_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_data(dir.path(), 150, 60);
    let out = run(
        &[
            "train", "--scheme", "emf", "--epochs", "2", "--batch-size", "50", "--seed", "21",
            "--data-dir", data.to_str().unwrap(), "--out", "runs",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let run_dir = dir.path().join("runs/emf_0_both");
    let original = std::fs::read(run_dir.join("curve.csv")).unwrap();
    let replay = run(
        &[
            "train",
            "--config",
            run_dir.join("manifest.txt").to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(replay.status.success());
    assert_eq!(original, std::fs::read(run_dir.join("curve.csv")).unwrap());
}

#[test]
fn exit_codes_distinguish_config_data_and_numeric_failures() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_data(dir.path(), 120, 40);

    // Config: bad scheme name.
    let out = run(
        &["train", "--scheme", "mega", "--data-dir", data.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));

    // Config: missing required data dir.
    let out = run(&["train"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    // Data: nonexistent directory.
    let out = run(&["train", "--data-dir", "nope", "--out", "r"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    // Data: missing checkpoint.
    let out = run(
        &["eval", "--checkpoint", "nope.dmf", "--data-dir", data.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    // Data: corrupt checkpoint.
    std::fs::write(dir.path().join("bad.dmf"), b"DMFX junk").unwrap();
    let out = run(
        &["eval", "--checkpoint", "bad.dmf", "--data-dir", data.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    // Numeric: absurd learning rate drives the loss to NaN.
    let out = run(
        &[
            "train", "--lr", "1e300", "--epochs", "2", "--batch-size", "60", "--data-dir",
            data.to_str().unwrap(), "--out", "boom",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8(out.stderr).unwrap();
    assert!(text.contains("batch"), "diagnostic should name the batch: {text}");
}

#[test]
fn gradcheck_passes_and_mutation_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gradcheck", "--seeds", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("PASS"));

    let out = run(&["gradcheck", "--seeds", "2", "--inject-sign-flip"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("FAIL"));
    // The flipped term feeds the modality pathways; the diagnostic
    // names the offending family and indices.
    let fail_line = text.lines().find(|l| l.contains("FAIL")).unwrap();
    assert!(
        fail_line.contains("x.") || fail_line.contains("y."),
        "offender missing from: {fail_line}"
    );
    assert!(fail_line.contains('['), "indices missing from: {fail_line}");
}

#[test]
fn sweep_covers_the_grid_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_data(dir.path(), 100, 40);
    let sweep_args = [
        "sweep", "--data-dir", data.to_str().unwrap(), "--out", "grid", "--epochs", "1",
        "--batch-size", "100", "--seed", "5", "--jobs", "2",
    ];
    let out = run(&sweep_args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("grid/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25, "header plus 24 grid rows");
    assert!(csv.starts_with("scheme,damage,modality,error\n"));
    for scheme in ["emf", "imf", "dmf"] {
        for damage in ["0", "0.3", "0.5", "0.7"] {
            for modality in ["both", "right"] {
                let dir_name = format!("grid/{scheme}_{damage}_{modality}");
                assert!(dir.path().join(&dir_name).join("result.json").exists(), "{dir_name}");
            }
        }
    }

    // Remove one cell; rerun retrains only that cell.
    std::fs::remove_file(dir.path().join("grid/dmf_0.5_right/result.json")).unwrap();
    let out = run(&sweep_args, dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("skipping").count(), 23);
    assert!(dir.path().join("grid/dmf_0.5_right/result.json").exists());

    // Scheme/damage/modality flags conflict with the grid.
    let out = run(
        &["sweep", "--data-dir", data.to_str().unwrap(), "--scheme", "dmf"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn input_files_are_never_mutated() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_data(dir.path(), 100, 40);
    let before: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(&data)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    let out = run(
        &[
            "train", "--damage", "0.7", "--epochs", "1", "--batch-size", "50", "--data-dir",
            data.to_str().unwrap(), "--out", "runs",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    for (path, bytes) in before {
        assert_eq!(std::fs::read(&path).unwrap(), bytes, "{} changed", path.display());
    }
}
