use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;
use wettingsim::CorrelationEstimate;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wettingsim"));
    c.env_remove("WETTINGSIM_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn wettingsim")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, format!("schema_version = 1\n{body}")).unwrap();
    path
}

const SMALL: &str = r#"
[model]
J = [1.0, 3.0]
K = [0.2]
[system]
n = 64
distribution = "exp_mean_one"
[schedule]
thermalization_sweeps = 50
measure_every = 2
n_measurements = 100
[replicas]
count = 2
substrate_seed = 11
run_seed = 12
[analysis]
max_lag = 16
fit_range = [0, 16]
noise_floor_sigma = 3.0
"#;

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn smoke_run_is_fast() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "smoke.toml",
        r#"
[model]
J = [1.0]
K = [0.1]
[system]
n = 64
distribution = "exp_mean_one"
[schedule]
thermalization_sweeps = 1
measure_every = 1
n_measurements = 10
[replicas]
count = 1
substrate_seed = 1
run_seed = 2
[analysis]
max_lag = 8
fit_range = [0, 8]
noise_floor_sigma = 3.0
"#,
    );
    let out = tmp.path().join("out");
    let t = Instant::now();
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let secs = t.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(secs < 1.0, "smoke run took {secs} s");
    let text = fs::read_to_string(out.join("correlation_J1_K0.1.csv")).unwrap();
    let (est, _) = CorrelationEstimate::parse_csv(&text, Path::new("x")).unwrap();
    assert_eq!(est.f.len(), 9);
    assert_eq!(est.n_measurements, 10);
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let fa = files_under(&a);
    let fb = files_under(&b);
    assert_eq!(fa.len(), fb.len());
    assert_eq!(fa.len(), 2 + 2 + 1 + 2 * 2 * 3);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(&a).unwrap(), y.strip_prefix(&b).unwrap());
        if x.to_string_lossy().contains("report_") {
            let (mut jx, mut jy) = (json(x), json(y));
            for j in [&mut jx, &mut jy] {
                j["run"]["wall_time_secs"] = Value::Null;
            }
            assert_eq!(jx, jy, "{}", x.display());
        } else {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
    }
}

#[test]
fn every_output_carries_version_and_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let sim = tmp.path().join("sim");
    let fitted = tmp.path().join("fit");
    assert!(run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        sim.to_str().unwrap()
    ])
    .status
    .success());
    let o = run(&["fit", "--in", sim.to_str().unwrap(), "--out", fitted.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let hash = json(&sim.join("manifest.json"))["config_hash"]
        .as_str()
        .unwrap()
        .to_string();
    assert_eq!(hash.len(), 64);
    for f in files_under(&sim).into_iter().chain(files_under(&fitted)) {
        let text = fs::read_to_string(&f).unwrap();
        if f.to_string_lossy().contains("substrate_r") {
            continue;
        }
        assert!(text.contains(&hash), "{} lacks the config hash", f.display());
        assert!(
            text.contains(env!("CARGO_PKG_VERSION")),
            "{} lacks the version",
            f.display()
        );
    }
    let summary = fs::read_to_string(fitted.join("fit_summary.csv")).unwrap();
    assert_eq!(summary.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn fit_recovers_synthetic_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    fs::create_dir(&input).unwrap();
    let truth = [
        (1.0, 0.1, 1.5, 8.0, 1.2),
        (2.0, 0.1, 1.1, 14.0, 1.6),
        (3.0, 0.1, 0.8, 21.0, 1.9),
    ];
    for &(j, k, a, b, c) in &truth {
        let f: Vec<f64> = (0..=60).map(|x: usize| a * (-(x as f64 / b).powf(c)).exp()).collect();
        let csv = CorrelationEstimate::from_values(f).to_csv(&[format!("J={j} K={k}")]);
        fs::write(input.join(format!("correlation_J{j}_K{k}.csv")), csv).unwrap();
    }
    let out = tmp.path().join("out");
    let o = run(&["fit", "--in", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for &(j, k, a, b, c) in &truth {
        let r = json(&out.join(format!("fit_J{j}_K{k}.json")));
        assert_eq!(r["converged"], Value::Bool(true));
        for (key, want) in [("a", a), ("b", b), ("c", c)] {
            let got = r[key].as_f64().unwrap();
            assert!((got - want).abs() < 1e-6 * want, "J={j} {key}: {got} vs {want}");
        }
    }
    assert!(out.join("common_points.json").exists());
    assert!(out.join("scaling.json").exists());
}

#[test]
fn fit_failure_is_recorded_per_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    fs::create_dir(&input).unwrap();
    let good: Vec<f64> = (0..=30).map(|x| (-(x as f64 / 5.0)).exp()).collect();
    let bad = vec![1.0, -1.0, 0.5, -0.5];
    for (name, f) in [("J1_K0.1", good), ("J2_K0.1", bad)] {
        let j = &name[1..2];
        let csv = CorrelationEstimate::from_values(f).to_csv(&[format!("J={j} K=0.1")]);
        fs::write(input.join(format!("correlation_{name}.csv")), csv).unwrap();
    }
    let out = tmp.path().join("out");
    let o = run(&["fit", "--in", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(json(&out.join("fit_J1_K0.1.json"))["error"].is_null());
    assert!(json(&out.join("fit_J2_K0.1.json"))["error"].is_string());
}

#[test]
fn fit_on_empty_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "fit",
        "--in",
        tmp.path().to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no input"), "{}", stderr(&o));
}

#[test]
fn fit_rejects_malformed_csv() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("correlation_J1_K1.csv"), "# J=1 K=1\nj,f\n0,1\n").unwrap();
    let o = run(&[
        "fit",
        "--in",
        tmp.path().to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("malformed"), "{}", stderr(&o));
}

#[test]
fn oracle_enforces_size_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "big.toml",
        "[system]\nn = 32\ndistribution = \"exp_mean_one\"\n[analysis]\nmax_lag = 4\nfit_range = [0, 4]\nnoise_floor_sigma = 3.0\n",
    );
    let o = run(&[
        "oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("16"), "{}", stderr(&o));
}

#[test]
fn decoupled_analytic_oracle_and_mc_agree() {
    let (n, k) = (6usize, 1.0f64);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "j0.toml",
        &format!(
            r#"
[model]
J = [0.0]
K = [{k}]
[system]
n = {n}
distribution = "flat_zero"
[schedule]
thermalization_sweeps = 10
measure_every = 1
n_measurements = 100000
[replicas]
count = 1
substrate_seed = 5
run_seed = 6
[analysis]
max_lag = 3
fit_range = [0, 3]
noise_floor_sigma = 3.0
[oracle]
delta = 0.1
replica = 0
"#
        ),
    );
    let dir = tmp.path().join("run");
    let d = dir.to_str().unwrap();
    let c = cfg.to_str().unwrap();
    assert!(run(&["simulate", "--config", c, "--out", d]).status.success());
    let o = run(&["oracle", "--config", c, "--out", d, "--compare", d]);
    assert!(o.status.success(), "{}", stderr(&o));

    // Independent Exp(K) sites; the spatial estimator subtracts the site mean.
    let var = 1.0 / (k * k);
    let nf = n as f64;
    let analytic_f = |j: usize| if j == 0 { var * (nf - 1.0) / nf } else { -var / nf };
    let r = json(&dir.join("oracle_J0_K1.json"));
    for m in r["mean_heights"].as_array().unwrap() {
        assert!((m.as_f64().unwrap() - 1.0 / k).abs() < 1e-4);
    }
    let est = r["f_spatial_estimator"].as_array().unwrap();
    for (j, v) in est.iter().take(4).enumerate() {
        assert!((v.as_f64().unwrap() - analytic_f(j)).abs() < 1e-4, "lag {j}: {v}");
    }
    assert!((r["f"][0].as_f64().unwrap() - var).abs() < 1e-4);
    assert!(r["max_abs_z"].as_f64().unwrap() < 3.0, "{}", r["max_abs_z"]);

    let table = fs::read_to_string(dir.join("comparison_J0_K1.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), n + 4);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        let (mc, se): (f64, f64) = (cols[2].parse().unwrap(), cols[3].parse().unwrap());
        let exact = if cols[0] == "f" {
            analytic_f(cols[1].parse().unwrap())
        } else {
            1.0 / k
        };
        assert!(((mc - exact) / se).abs() < 3.5, "{row}");
    }
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("[model]\nJ = [1.0]\nK = [-0.1]\n", "model.K[0]"),
        (
            "[schedule]\nthermalization_sweeps = 1\nmeasure_every = 0\nn_measurements = 1\n",
            "schedule.measure_every",
        ),
        ("[system]\nn = 64\nsize = 3\n", "size"),
        (
            "[schedule]\nthermalization_sweeps = 0\nmeasure_every = 1\nn_measurements = 1\n",
            "schedule.thermalization_sweeps",
        ),
        (
            "[replicas]\ncount = \"many\"\nsubstrate_seed = 1\nrun_seed = 1\n",
            "count",
        ),
    ];
    for (i, (body, field)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.toml"), body);
        let o = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(2), "{field}: {}", stderr(&o));
        assert!(stderr(&o).contains(field), "{field}: {}", stderr(&o));
    }
    let missing = run(&["simulate", "--config", tmp.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    let usage = run(&["simulate", "--threads", "x"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn thread_env_must_be_numeric() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let o = bin()
        .args([
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            tmp.path().join("o").to_str().unwrap(),
        ])
        .env("WETTINGSIM_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("WETTINGSIM_THREADS"));
}

#[test]
fn substrate_gen_and_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("s.txt");
    let p = path.to_str().unwrap();
    let o = run(&["substrate", "gen", "--n", "1000", "--seed", "9", "--out", p]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["substrate", "inspect", p]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("n: 1000"));
    assert!(text.contains("(ok)"));
    let mean: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("mean: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((mean - 1.0).abs() < 0.15);

    let mut body = fs::read_to_string(&path).unwrap();
    let last = body.trim_end().rfind('\n').unwrap();
    body.replace_range(last + 1.., "7.0\n");
    fs::write(&path, body).unwrap();
    let o = run(&["substrate", "inspect", p]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}
