use std::path::Path;
use std::process::Command;

fn lumenlab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lumenlab")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_writes_manifest_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    let (code, err) = lumenlab(&["gen-data", "--n", "8", "--seed", "1", "--out", s(&d)]);
    assert_eq!(code, 0, "{err}");
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["count"], 8);
    let echo = std::fs::read_to_string(d.join(lumenlab_cli::ECHO_FILE)).unwrap();
    assert!(echo.contains("n = 8") && echo.contains("seed = 1"), "{echo}");
}

#[test]
fn usage_errors_exit_2() {
    let (code, _) = lumenlab(&["gen-data", "--out", "x", "--bogus"]);
    assert_eq!(code, 2);
    let (code, _) = lumenlab(&["frobnicate"]);
    assert_eq!(code, 2);
    let (code, _) = lumenlab(&["train", "--out", "x", "--disable-loss", "everything"]);
    assert_eq!(code, 2);
}

#[test]
fn eval_without_checkpoint_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("missing.llab");
    let (code, err) = lumenlab(&["eval", "--out", s(&dir.path().join("e")), "--checkpoint", s(&ckpt)]);
    assert_eq!(code, 1);
    assert_eq!(err.trim(), format!("checkpoint not found: {}", ckpt.display()));
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn config_file_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.kv");
    std::fs::write(&cfg, "n = 4\nlearning_rate = 3\n").unwrap();
    let (code, err) = lumenlab(&["gen-data", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(code, 1);
    assert!(err.contains("line 2: unknown key learning_rate"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.kv");
    std::fs::write(&cfg, "n = 3\nseed = 9\n").unwrap();
    let d = dir.path().join("d");
    let (code, err) = lumenlab(&["gen-data", "--config", s(&cfg), "--seed", "2", "--out", s(&d)]);
    assert_eq!(code, 0, "{err}");
    let echo = std::fs::read_to_string(d.join(lumenlab_cli::ECHO_FILE)).unwrap();
    assert!(echo.contains("n = 3") && echo.contains("seed = 2"), "{echo}");
}

#[test]
fn train_without_estimator_needs_phy_disabled() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    assert_eq!(lumenlab(&["gen-data", "--n", "4", "--out", s(&d)]).0, 0);
    let (code, err) = lumenlab(&["train", "--data", s(&d), "--out", s(&dir.path().join("t")), "--iterations", "2"]);
    assert_eq!(code, 1);
    assert!(err.contains("--estimator"), "{err}");
}

#[test]
fn pipeline_end_to_end_and_rerun_from_echo() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    assert_eq!(lumenlab(&["gen-data", "--n", "12", "--seed", "3", "--out", s(&p("train"))]).0, 0);
    assert_eq!(lumenlab(&["gen-data", "--n", "4", "--seed", "4", "--out", s(&p("test"))]).0, 0);
    let (code, err) = lumenlab(&["train-estimator", "--data", s(&p("train")), "--iterations", "5", "--out", s(&p("est"))]);
    assert_eq!(code, 0, "{err}");
    let est = p("est").join("estimator.llab");
    let (code, err) = lumenlab(&[
        "train", "--data", s(&p("train")), "--estimator", s(&est), "--iterations", "3", "--seed", "5", "--out", s(&p("run")),
    ]);
    assert_eq!(code, 0, "{err}");
    let loss = std::fs::read_to_string(p("run").join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 4);
    let model = p("run").join("model.llab");
    let (code, err) = lumenlab(&[
        "eval", "--checkpoint", s(&model), "--data", s(&p("test")), "--estimator", s(&est), "--steps", "1,4", "--out", s(&p("eval")),
    ]);
    assert_eq!(code, 0, "{err}");
    let eval = std::fs::read_to_string(p("eval").join("eval.csv")).unwrap();
    assert_eq!(eval.lines().count(), 4, "{eval}");

    let echo = p("eval").join(lumenlab_cli::ECHO_FILE);
    let (code, err) = lumenlab(&["eval", "--config", s(&echo), "--out", s(&p("eval2"))]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(eval, std::fs::read_to_string(p("eval2").join("eval.csv")).unwrap());

    let (code, err) = lumenlab(&["sample", "--checkpoint", s(&model), "--data", s(&p("test")), "--index", "1", "--steps", "2", "--out", s(&p("s"))]);
    assert_eq!(code, 0, "{err}");
    assert!(p("s").join("sample_00001.llab").exists());

    let (code, err) = lumenlab(&[
        "plot", s(&p("run").join("loss.csv")), s(&p("eval").join("eval.csv")), "--out", s(&p("plots")),
    ]);
    assert_eq!(code, 0, "{err}");
    let mut names: Vec<String> = std::fs::read_dir(p("plots")).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names, ["00_loss_loss.svg", "01_eval_steps_psnr.svg"]);
}

#[test]
fn plot_with_no_reports_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plots");
    let (code, _) = lumenlab(&["plot", "--out", s(&out)]);
    assert_eq!(code, 1);
    assert!(!out.exists());
}

#[test]
fn malformed_report_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("loss.csv");
    std::fs::write(&good, "iteration,L0,Lfast,Lphy,total\n0,1,0,0,1\n").unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "iteration,L0,Lfast,Lphy,total\n0,1,0,0,1\n1,x,0,0,1\n").unwrap();
    let out = dir.path().join("plots");
    let (code, err) = lumenlab(&["plot", s(&good), s(&bad), "--out", s(&out)]);
    assert_eq!(code, 1);
    assert!(err.contains("bad.csv") && err.contains("line 3"), "{err}");
    assert!(!out.exists());
}
