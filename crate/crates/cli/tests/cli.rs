use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jdvol::{builtin_model, simulate_path, ModelParams, SimConfig};
use jdvol_cli::error::CliError;
use jdvol_cli::{ingest_csv, ColumnSpec};

fn jdvol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jdvol"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn cols() -> ColumnSpec {
    ColumnSpec::default()
}

#[test]
fn ingest_reads_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "a.csv", "t,p\n0,100\n1,101\n2,100\n");
    let p = ingest_csv(&f, &cols(), None, false).unwrap();
    assert_eq!(p.values(), &[100.0, 101.0, 100.0]);
    assert_eq!(p.delta(), 1.0);
    assert_eq!(p.n(), 2);

    let r = ingest_csv(&f, &cols(), Some(0.5), false).unwrap();
    assert_eq!(r.values(), &[100.0, 100.0, 101.0, 101.0, 100.0]);
    assert_eq!(r.delta(), 0.5);

    let logged = ingest_csv(&f, &cols(), None, true).unwrap();
    assert_eq!(logged.values()[1], 101f64.ln());
}

#[test]
fn ingest_errors_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "b.csv", "t,p\n0,100\n1,101\n1,100\n");
    let err = ingest_csv(&f, &cols(), None, false).unwrap_err();
    assert!(matches!(err, CliError::Data(_)));
    assert!(err.to_string().contains("non-monotone timestamp at row 3"), "{err}");

    let f = write(dir.path(), "c.csv", "t,p\n0,100\n1,abc\n");
    let err = ingest_csv(&f, &cols(), None, false).unwrap_err().to_string();
    assert!(err.contains("row 2") && err.contains("'p'"), "{err}");

    let f = write(dir.path(), "d.csv", "t,p\n0,100\n1,101\n3,102\n");
    let err = ingest_csv(&f, &cols(), None, false).unwrap_err().to_string();
    assert!(err.contains("non-uniform spacing at row 3"), "{err}");
    assert!(ingest_csv(&f, &cols(), Some(1.0), false).is_ok());

    let f = write(dir.path(), "e.csv", "time,price\n0,1\n1,2\n");
    assert!(ingest_csv(&f, &cols(), None, false).is_err());
    let named = ColumnSpec {
        time: "time".into(),
        price: "price".into(),
    };
    assert!(ingest_csv(&f, &named, None, false).is_ok());
}

#[test]
fn theta_limit_prints_one() {
    let out = jdvol(&["theta", "--kernel", "epanechnikov", "--phi", "0.0001"]);
    assert!(out.status.success());
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((v - 1.0).abs() < 1e-3);
}

#[test]
fn simulate_is_byte_identical_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = jdvol(&[
            "simulate", "--model", "ou-jump", "--n", "1000", "--delta", "0.01", "--seed", "7", "-o",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    let head = String::from_utf8(text).unwrap();
    assert!(head.starts_with("# jdvol "));
    assert!(head.contains("# seed: 7"));

    let cols = ColumnSpec {
        time: "t".into(),
        price: "x".into(),
    };
    let read = ingest_csv(&a, &cols, None, false).unwrap();
    let model = builtin_model::<f64>("ou-jump", ModelParams::default()).unwrap();
    let direct = simulate_path(&model, &SimConfig::new(0.0, 1000, 0.01, 7)).unwrap();
    assert_eq!(read.delta().to_bits(), direct.delta().to_bits());
    assert_eq!(read.values().len(), direct.values().len());
    for (x, y) in read.values().iter().zip(direct.values()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }

    let c = dir.path().join("c.csv");
    let out = jdvol(&["simulate", "--config", a.to_str().unwrap(), "-o", c.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn estimate_rows_bracket_the_corrected_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.csv");
    let est = dir.path().join("est.csv");
    let report = dir.path().join("est.toml");
    let plot = dir.path().join("plot.csv");
    let out = jdvol(&[
        "simulate", "--model", "ou-jump", "--n", "20000", "--delta", "0.01", "--seed", "3", "-o",
        sim.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = jdvol(&[
        "estimate",
        "--input",
        sim.to_str().unwrap(),
        "--price-col",
        "x",
        "--levels",
        "-o",
        est.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--plot",
        plot.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resolved h ="));

    let text = fs::read_to_string(&est).unwrap();
    assert!(text.contains("# config: h = "), "resolved bandwidth must be echoed");
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(
        lines.next().unwrap(),
        "x,m2,m2_corrected,m4,local_time,std_error,ci_low,ci_high,reliable"
    );
    let mut reliable = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 9);
        if f[8] == "true" {
            let v: Vec<f64> = f[..8].iter().map(|s| s.parse().unwrap()).collect();
            assert!(v[6] <= v[2] && v[2] <= v[7], "{line}");
            reliable += 1;
        }
    }
    assert!(reliable > 10);
    assert!(fs::read_to_string(&report).unwrap().contains("[[point]]"));
    assert!(fs::read_to_string(&plot).unwrap().contains("x,m2,ci_low,ci_high"));

    // Re-running from the echoed configuration reproduces the file.
    let again = dir.path().join("again.csv");
    let out = jdvol(&["estimate", "--config", est.to_str().unwrap(), "-o", again.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&est).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn estimate_from_simulated_input_and_bandwidth() {
    let out = jdvol(&[
        "estimate", "--model", "ou-jump", "--n", "5000", "--delta", "0.01", "--h", "0.2", "--grid", "-0.2,0,0.2",
        "--regime", "small_h",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# config: eps = 0.2"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let out = jdvol(&["bandwidth", "--model", "statejump", "--n", "20000", "--delta", "0.01", "--phi", "0.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let t: toml::Table = toml::from_str(&body).unwrap();
    let h = t["h"].as_float().unwrap();
    let eps = t["eps"].as_float().unwrap();
    assert!(h > 0.0 && (eps - 2.0 * h).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    assert_eq!(jdvol(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(jdvol(&["theta", "--kernel", "triangle", "--phi", "1"]).status.code(), Some(1));
    assert_eq!(jdvol(&["theta", "--kernel", "quartic"]).status.code(), Some(1));
    assert_eq!(jdvol(&["estimate", "--input", "/definitely/missing.csv"]).status.code(), Some(2));
    let exploding = jdvol(&["simulate", "--model", "ou-jump", "--kappa", "-200", "--n", "100000", "--delta", "0.1"]);
    assert_eq!(exploding.status.code(), Some(3));
    assert_eq!(jdvol(&["--help"]).status.code(), Some(0));
}

#[test]
fn mc_study_writes_reproducible_tables() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(
        dir.path(),
        "plan.toml",
        r#"
name = "tiny"
model = "ou-jump"
regime = "small_h"
ladder_n = [2000, 4000]
ladder_delta = [0.01]
eps_scale = 1.0
eps_rate = 0.1666667
replications = 6
seed_base = 9
"#,
    );
    let prefix = dir.path().join("run");
    let out = jdvol(&["mc-study", "--plan", &plan, "-o", prefix.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = dir.path().join("run.toml");
    let table = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 3);

    let prefix2 = dir.path().join("rerun");
    let out = jdvol(&["mc-study", "--plan", report.to_str().unwrap(), "-o", prefix2.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(fs::read(&report).unwrap(), fs::read(dir.path().join("rerun.toml")).unwrap());
}
