use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn sqrtdiff(args: &[&str], threads: Option<&str>) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sqrtdiff"));
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("SQRTDIFF_THREADS", n),
        None => cmd.env_remove("SQRTDIFF_THREADS"),
    };
    let out = cmd.output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
    )
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn classify_feller_case() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let (code, stdout) = sqrtdiff(
        &[
            "classify", "--a", "1", "--b", "1", "--gamma", "1", "--alpha", "0.5", "--out", out,
        ],
        None,
    );
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["result"]["classification"], "unattainable");
    assert_eq!(read_json(&d.path().join("classify.json")), v);
}

#[test]
fn bounds_unit_norms() {
    let d = tempfile::tempdir().unwrap();
    let (code, stdout) = sqrtdiff(
        &[
            "bounds",
            "--norm-value",
            "1",
            "--m",
            "1",
            "--k",
            "3",
            "--out",
            d.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["result"]["bound_values"]["combinatorial"]["phi_k"], 147);
    assert!(v["result"]["saturation"]["any"].is_boolean());
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn every_artifact_carries_hash() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let (code, stdout) = sqrtdiff(&["cir-density", "--grid", "0.1:3:30", "--out", out], None);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    let hash = v["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    let csv = std::fs::read_to_string(d.path().join("cir_density.csv")).unwrap();
    assert!(csv.starts_with(&format!(
        "# sqrtdiff {} config-sha256 {hash}",
        env!("CARGO_PKG_VERSION")
    )));
    assert_eq!(csv.lines().count(), 32);
}

#[test]
fn config_file_and_errors() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"model": {"family": "constant", "a": 1, "b": 1, "gamma": 1, "alpha": 0.5}, "foo": 1}"#,
    )
    .unwrap();
    let out = d.path().join("out");
    let (code, _) = sqrtdiff(
        &[
            "classify",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code, 3);
    let err = read_json(&out.join("error.json"));
    assert_eq!(err["error"]["kind"], "validation-error");

    std::fs::write(&cfg, "{\"seed\": }").unwrap();
    let (code, _) = sqrtdiff(
        &[
            "classify",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code, 3);
    assert_eq!(
        read_json(&out.join("error.json"))["error"]["kind"],
        "parse-error"
    );

    let (code, _) = sqrtdiff(
        &[
            "simulate",
            "--alpha",
            "0.7",
            "--scheme",
            "exact",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(code, 3);
    assert_eq!(
        read_json(&out.join("error.json"))["error"]["kind"],
        "model-error"
    );

    let (code, _) = sqrtdiff(&["classify", "--out", out.to_str().unwrap()], Some("zero"));
    assert_eq!(code, 3);
}

#[test]
fn verification_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let (code, _) = sqrtdiff(&["verify-zero", "--a", "0.25", "--out", out], None);
    assert_eq!(code, 0);
    let v = read_json(&d.path().join("verify_zero.json"));
    assert!((v["result"]["fits"][0]["value"].as_f64().unwrap() + 0.5).abs() < 0.025);
    assert!(d.path().join("verify_zero.csv").exists());
    // Near the Feller threshold the scale limit alone cannot decide.
    let (code, _) = sqrtdiff(
        &[
            "classify", "--a", "0.495", "--b", "1", "--gamma", "1", "--out", out,
        ],
        None,
    );
    assert_eq!(code, 2);
}

#[test]
fn simulate_and_estimate() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let (code, stdout) = sqrtdiff(
        &[
            "simulate",
            "--paths",
            "2000",
            "--steps",
            "64",
            "--write-paths",
            "--out",
            out,
        ],
        None,
    );
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["result"]["n_paths"], 2000);
    let csv = std::fs::read_to_string(d.path().join("paths.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2002);

    let (code, stdout) = sqrtdiff(
        &[
            "estimate",
            "--method",
            "fourier-local",
            "--scheme",
            "exact",
            "--paths",
            "20000",
            "--radius",
            "0.5",
            "--y0",
            "1",
            "--out",
            out,
        ],
        None,
    );
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    let f = &v["result"]["fourier"];
    assert!(f["m0"].as_f64().unwrap() > 0.0);
    assert!(f["truncation_estimate"].is_number() && f["ripple"].is_number());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let d = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (i, threads) in ["1", "8", "8"].iter().enumerate() {
        let out = d.path().join(format!("run{i}"));
        let (code, _) = sqrtdiff(
            &[
                "estimate",
                "--method",
                "kde-log",
                "--paths",
                "5000",
                "--steps",
                "128",
                "--seed",
                "42",
                "--out",
                out.to_str().unwrap(),
            ],
            Some(threads),
        );
        assert_eq!(code, 0);
        runs.push(dir_bytes(&out));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
}
