//! End-to-end tests of the command-line surface: subcommands, exit codes,
//! output formats, seed precedence, and cross-process determinism.

use resid_edf::data::{self, ErrorLaw, SimDesign};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_resid-edf")
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(binary());
    cmd.args(args).env_remove("RESID_EDF_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("resid-edf-cli-{tag}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_sample(path: &Path, n: usize, law: ErrorLaw, seed: u64) {
    let sample = data::generate(&SimDesign::new(n, law, seed));
    let mut buf = Vec::new();
    data::write_mar_csv(&sample, &mut buf).unwrap();
    fs::write(path, buf).unwrap();
}

#[test]
fn fit_exports_a_grid() {
    let dir = temp_dir("fit");
    let input = dir.join("sample.csv");
    let output = dir.join("fitted.csv");
    write_sample(&input, 120, ErrorLaw::StdNormal, 5);
    let out = run(
        &[
            "fit",
            "--data",
            input.to_str().unwrap(),
            "--degree",
            "1",
            "--bandwidth",
            "auto",
            "--grid",
            "51",
            "--out",
            output.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&output).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# resid-edf"));
    assert_eq!(lines.next().unwrap(), "x,rhat");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 51);
    for row in rows {
        let (x, rhat) = row.split_once(',').unwrap();
        x.parse::<f64>().unwrap();
        rhat.parse::<f64>().unwrap();
    }
}

#[test]
fn fit_with_fixed_bandwidth_and_bad_inputs() {
    let dir = temp_dir("fitbad");
    let input = dir.join("sample.csv");
    write_sample(&input, 60, ErrorLaw::StdNormal, 6);
    let output = dir.join("fitted.csv");
    let ok = run(
        &[
            "fit",
            "--data",
            input.to_str().unwrap(),
            "--bandwidth",
            "0.4",
            "--grid",
            "11",
            "--out",
            output.to_str().unwrap(),
        ],
        &[],
    );
    assert!(ok.status.success());
    let bad_bw = run(
        &[
            "fit",
            "--data",
            input.to_str().unwrap(),
            "--bandwidth",
            "-1",
            "--out",
            output.to_str().unwrap(),
        ],
        &[],
    );
    assert!(!bad_bw.status.success());
    let missing = run(
        &[
            "fit",
            "--data",
            dir.join("nope.csv").to_str().unwrap(),
            "--out",
            output.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn edf_exports_jump_points() {
    let dir = temp_dir("edf");
    let input = dir.join("sample.csv");
    write_sample(&input, 150, ErrorLaw::StdNormal, 7);
    for tuned in [false, true] {
        let output = dir.join(if tuned { "edf_tuned.csv" } else { "edf.csv" });
        let mut args = vec![
            "edf",
            "--data",
            input.to_str().unwrap(),
            "--out",
            output.to_str().unwrap(),
        ];
        if tuned {
            args.push("--tuned");
        }
        let out = run(&args, &[]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        let text = fs::read_to_string(&output).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# resid-edf"));
        assert_eq!(lines.next().unwrap(), "t,F");
        let mut last = 0.0;
        let mut prev_t = f64::NEG_INFINITY;
        for row in lines {
            let (t, f) = row.split_once(',').unwrap();
            let t: f64 = t.parse().unwrap();
            let f: f64 = f.parse().unwrap();
            assert!(t > prev_t, "jump points must be increasing");
            assert!(f > last && f <= 1.0 + 1e-12);
            prev_t = t;
            last = f;
        }
        assert!((last - 1.0).abs() < 1e-12, "EDF must reach 1, got {last}");
    }
}

#[test]
fn normtest_exit_codes_and_json() {
    let dir = temp_dir("normtest");
    let normal = dir.join("normal.csv");
    write_sample(&normal, 200, ErrorLaw::StdNormal, 8);
    let out = run(&["normtest", "--data", normal.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0), "normal data should be retained");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout.trim();
    assert!(line.starts_with('{') && line.ends_with('}'), "json line: {line}");
    for key in [
        "\"statistic\":",
        "\"critical_value\":",
        "\"N\":",
        "\"truncated_points\":",
        "\"alpha\":",
        "\"reject\":false",
    ] {
        assert!(line.contains(key), "missing {key} in {line}");
    }

    // a blatantly skewed alternative at a size where the test has power ~1
    let skewed = dir.join("chisq.csv");
    write_sample(&skewed, 400, ErrorLaw::ChiSqOneCentered, 9);
    let out = run(&["normtest", "--data", skewed.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1), "chi-square residuals should reject");
    assert!(String::from_utf8(out.stdout).unwrap().contains("\"reject\":true"));

    // errors exit with 2
    let out = run(
        &["normtest", "--data", dir.join("absent.csv").to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    let tiny = dir.join("tiny.csv");
    fs::write(&tiny, "x1,y,delta\n0.0,1.0,1\n0.5,,0\n").unwrap();
    let out = run(&["normtest", "--data", tiny.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mse_is_deterministic_across_processes_and_thread_counts() {
    let dir = temp_dir("mse");
    let out_a = dir.join("a.csv");
    let out_b = dir.join("b.csv");
    let args = |out: &Path| {
        vec![
            "mse".to_string(),
            "--n".into(),
            "50".into(),
            "--runs".into(),
            "40".into(),
            "--seed".into(),
            "31415".into(),
            "--out".into(),
            out.to_str().unwrap().to_string(),
        ]
    };
    let a: Vec<String> = args(&out_a);
    let b: Vec<String> = args(&out_b);
    let run_with_threads = |argv: &[String], threads: &str| {
        let out = Command::new(binary())
            .args(argv)
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    };
    run_with_threads(&a, "1");
    run_with_threads(&b, "2");
    let text_a = fs::read_to_string(&out_a).unwrap();
    let text_b = fs::read_to_string(&out_b).unwrap();
    assert_eq!(text_a, text_b, "outputs differ across thread counts");
    assert!(text_a.contains("seed=31415"));
}

#[test]
fn power_writes_the_table() {
    let dir = temp_dir("power");
    let out_path = dir.join("power.csv");
    let out = run(
        &[
            "power",
            "--laws",
            "chisq1",
            "--n",
            "80",
            "--runs",
            "25",
            "--seed",
            "12",
            "--out",
            out_path.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("# resid-edf"));
    assert!(text.contains("law,n,tc_rate,tc_se,tiota_rate,tiota_se,failures"));
    assert!(text.contains("chisq1,80,"));

    let bad = run(
        &[
            "power",
            "--laws",
            "cauchy",
            "--n",
            "80",
            "--runs",
            "5",
            "--out",
            out_path.to_str().unwrap(),
        ],
        &[],
    );
    assert!(!bad.status.success());
}

#[test]
fn seed_precedence_flag_env_default() {
    let dir = temp_dir("seed");
    let out_path = dir.join("seeded.csv");
    let base = [
        "mse",
        "--n",
        "50",
        "--runs",
        "5",
        "--out",
        out_path.to_str().unwrap(),
    ];
    // env var is honored
    let out = run(&base, &[("RESID_EDF_SEED", "777")]);
    assert!(out.status.success());
    assert!(fs::read_to_string(&out_path).unwrap().contains("seed=777"));
    // flag beats env
    let mut with_flag = base.to_vec();
    with_flag.extend(["--seed", "55"]);
    let out = run(&with_flag, &[("RESID_EDF_SEED", "777")]);
    assert!(out.status.success());
    assert!(fs::read_to_string(&out_path).unwrap().contains("seed=55"));
    // default otherwise
    let out = run(&base, &[]);
    assert!(out.status.success());
    assert!(fs::read_to_string(&out_path)
        .unwrap()
        .contains(&format!("seed={}", resid_edf::harness::DEFAULT_MASTER_SEED)));
    // malformed env is an error
    let out = run(&base, &[("RESID_EDF_SEED", "not-a-number")]);
    assert!(!out.status.success());
}
