use std::path::Path;
use std::process::{Command, Output};

fn hbcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbcm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_fit_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let truth = dir.path().join("truth.json");
    let fit = dir.path().join("fit.json");
    let labels = dir.path().join("labels.json");

    let out = hbcm(&[
        "generate", "--n", "300", "--p", "30", "--k", "3", "--seed", "4", "--out", s(&data),
        "--truth", s(&truth), "--sigma", "0.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = hbcm(&["fit", "--data", s(&data), "--k", "3", "--seed", "1", "--out", s(&fit)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    for key in ["labels", "pi", "omega", "lambda", "sigma2", "elbo_trace", "iterations", "converged"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert_eq!(doc["labels"].as_array().unwrap().len(), 30);

    let out = hbcm(&["ari", "--a", s(&fit), "--b", s(&truth)]);
    assert!(out.status.success());
    let ari: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(ari > 0.9, "ari {ari}");

    let out = hbcm(&["spectral", "--data", s(&data), "--k", "3", "--seed", "1", "--out", s(&labels)]);
    assert!(out.status.success());
    let out = hbcm(&[
        "fit", "--data", s(&data), "--k", "3", "--seed", "1", "--out", s(&fit), "--init", "labels",
        s(&labels), "--max-iters", "20", "--tol", "1e-8", "--paper-literal-init",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn t_noise_requires_dof() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let truth = dir.path().join("t.json");
    let base = ["generate", "--n", "20", "--p", "9", "--k", "3", "--seed", "1", "--out", s(&data), "--truth", s(&truth)];
    let mut args = base.to_vec();
    args.extend(["--noise", "t"]);
    assert_eq!(hbcm(&args).status.code(), Some(1));
    args.extend(["--dof", "5"]);
    assert_eq!(hbcm(&args).status.code(), Some(0));
}

#[test]
fn cv_reports_best_k() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let truth = dir.path().join("t.json");
    let cv = dir.path().join("cv.json");
    let out = hbcm(&[
        "generate", "--n", "400", "--p", "36", "--k", "3", "--seed", "2", "--out", s(&data),
        "--truth", s(&truth), "--sigma", "0.5", "--offdiag", "0.2",
    ]);
    assert!(out.status.success());
    let out = hbcm(&[
        "cv", "--data", s(&data), "--k-min", "2", "--k-max", "4", "--m", "3", "--seed", "1", "--out", s(&cv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cv).unwrap()).unwrap();
    assert_eq!(doc["best_k"], 3);
    assert_eq!(doc["per_split_ari"].as_array().unwrap().len(), 3);
}

#[test]
fn bench_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = hbcm(&[
            "bench", "sweep", "--name", "sigma", "--grid", "1", "--reps", "1", "--seed", "3", "--out", s(out),
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let summary = std::fs::read_to_string(dir.path().join("a.summary.csv")).unwrap();
    assert!(summary.starts_with("scenario,param,n,p,k,method"));
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn exit_codes() {
    assert_eq!(hbcm(&["--help"]).status.code(), Some(0));
    assert_eq!(hbcm(&["fit", "--bogus"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(
        hbcm(&["bench", "sweep", "--name", "nope", "--seed", "1", "--out", s(&out)]).status.code(),
        Some(1)
    );
    assert_eq!(
        hbcm(&["bench", "table1", "--cells", "500,301,3", "--seed", "1", "--out", s(&out)]).status.code(),
        Some(1)
    );

    // A constant column makes the correlation kernel undefined.
    let data = dir.path().join("const.csv");
    std::fs::write(&data, "1,0.5,2\n1,-0.5,1\n1,0.25,-3\n1,1.5,0\n").unwrap();
    let labels = dir.path().join("l.json");
    let res = hbcm(&["spectral", "--data", s(&data), "--k", "2", "--seed", "1", "--out", s(&labels)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn ari_of_label_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    std::fs::write(&a, r#"{"labels":[1,1,1,2,2,2]}"#).unwrap();
    std::fs::write(&b, r#"{"labels":[1,1,2,2,3,3]}"#).unwrap();
    let out = hbcm(&["ari", "--a", s(&a), "--b", s(&b)]);
    let v: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((v - 8.0 / 33.0).abs() < 1e-15);
}
