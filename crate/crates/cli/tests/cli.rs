use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cdquench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdquench"))
        .args(args)
        .env_remove("CDQUENCH_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn fig1_writes_both_filters() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = cdquench(&["fig1", "--n-sites", "40", "--cutoffs", "4,8", "--out", out]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    for (name, filter) in [
        ("fig1_dirichlet.csv", "dirichlet"),
        ("fig1_raised_cosine.csv", "raised-cosine"),
    ] {
        let text = read(&dir.path().join(name));
        assert!(text.starts_with("# cdquench "));
        assert!(text.contains("# n_sites = 40\n"));
        assert!(text.contains("# rate = 50.0\n"));
        assert!(text.lines().any(|l| l == "k,M,filter,p_k,kM"));
        let rows = data_rows(&text);
        assert_eq!(rows.len(), 2 * 20);
        for row in &rows {
            assert_eq!(row[2], filter);
            let k: f64 = row[0].parse().unwrap();
            let m: f64 = row[1].parse().unwrap();
            let p: f64 = row[3].parse().unwrap();
            let km: f64 = row[4].parse().unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert_eq!(km, k * m);
        }
    }
}

#[test]
fn output_is_identical_across_worker_counts() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    let args = |dir: &TempDir, workers: &str| {
        let out = dir.path().to_str().unwrap().to_owned();
        let run = cdquench(&[
            "sweep",
            "--n-sites",
            "32",
            "--rates",
            "0.5,5",
            "--cutoffs",
            "0,2,8",
            "--workers",
            workers,
            "--out",
            &out,
        ]);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
        let run = cdquench(&[
            "fig1",
            "--n-sites",
            "32",
            "--cutoffs",
            "2,4",
            "--workers",
            workers,
            "--out",
            &out,
        ]);
        assert_eq!(code(&run), 0);
    };
    args(&a, "1");
    args(&b, "3");
    args(&c, "1");
    for name in ["sweep.csv", "fig1_dirichlet.csv", "fig1_raised_cosine.csv"] {
        let first = fs::read(a.path().join(name)).unwrap();
        assert_eq!(
            first,
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs across worker counts"
        );
        assert_eq!(
            first,
            fs::read(c.path().join(name)).unwrap(),
            "{name} differs across runs"
        );
    }
}

#[test]
fn fig2_grid_and_ordering() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = cdquench(&["fig2", "--n-sites", "128", "--rates", "1,10,100", "--out", out]);
    assert_eq!(code(&run), 0);
    let text = read(&dir.path().join("fig2.csv"));
    assert!(text.lines().any(|l| l == "rate,M,n_ex"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 3 * 8);
    let cutoffs: Vec<&str> = rows[..8].iter().map(|r| r[1].as_str()).collect();
    assert_eq!(cutoffs, ["0", "1", "2", "4", "8", "16", "32", "64"]);
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        "experiment = \"sweep\"\nn_sites = 40\nrates = [2.0]\n[driver]\ncutoffs = [1, 3]\nfilter = \"raised-cosine\"\n",
    )
    .unwrap();
    let out = dir.path().join("res");
    let run = cdquench(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--n-sites",
        "24",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = read(&out.join("sweep.csv"));
    assert!(text.contains("# n_sites = 24\n"));
    assert!(text.contains("# filter = \"raised-cosine\"\n"));
    assert_eq!(data_rows(&text).len(), 2);

    let run = cdquench(&[
        "fig2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2, "config for another experiment");
    fs::write(&cfg, "n_sites = 40\nbogus = 1\n").unwrap();
    let run = cdquench(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--rates",
        "1",
        "--cutoffs",
        "1",
    ]);
    assert_eq!(code(&run), 2, "unknown key");
}

#[test]
fn output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    let run = Command::new(env!("CARGO_BIN_EXE_cdquench"))
        .args(["sweep", "--n-sites", "8", "--rates", "1", "--cutoffs", "0"])
        .env("CDQUENCH_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&run), 0);
    assert!(dir.path().join("sweep.csv").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["fig1", "--n-sites", "40", "--cutoffs", "21", "--out", out],
        vec!["fig1", "--n-sites", "41", "--out", out],
        vec![
            "sweep",
            "--rates",
            "1",
            "--cutoffs",
            "1",
            "--filter",
            "boxcar",
            "--out",
            out,
        ],
        vec![
            "sweep",
            "--n-sites",
            "8",
            "--rates",
            "-1",
            "--cutoffs",
            "1",
            "--out",
            out,
        ],
        vec!["sweep", "--n-sites", "8", "--cutoffs", "1", "--out", out],
        vec!["fig1", "--n-sites", "8", "--gi", "0", "--gf", "1", "--out", out],
        vec!["fig1", "--n-sites", "8", "--tol", "0", "--out", out],
        vec!["lz-demo", "--points", "1", "--out", out],
        vec!["nonsense"],
    ] {
        let run = cdquench(&args);
        assert_eq!(code(&run), 2, "{args:?}: {}", String::from_utf8_lossy(&run.stderr));
    }
}

#[test]
fn engine_failure_exits_3_and_is_annotated() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = cdquench(&[
        "sweep",
        "--n-sites",
        "8",
        "--rates",
        "5",
        "--cutoffs",
        "0,2",
        "--tol",
        "1e-300",
        "--out",
        out,
    ]);
    assert_eq!(code(&run), 3);
    let text = read(&dir.path().join("sweep.csv"));
    assert_eq!(text.lines().filter(|l| l.starts_with("# failed")).count(), 2);
}

#[test]
fn oracle_check_reports() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = cdquench(&["oracle-check", "4", "6", "8", "--out", out]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(&dir.path().join("oracle_check.json"))).unwrap();
    assert_eq!(report["pass"], true);
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 3 * 7);
    assert!(checks.iter().all(|c| c["deviation"].as_f64().unwrap() <= 1e-8));

    let run = cdquench(&["oracle-check", "14", "--out", out]);
    assert_eq!(code(&run), 2);
    let run = cdquench(&["oracle-check", "--out", out]);
    assert_eq!(code(&run), 0);
    let report: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert!(report["checks"].as_array().unwrap().is_empty());
    let run = cdquench(&["oracle-check", "4", "--threshold", "1e-30", "--out", out]);
    assert_eq!(code(&run), 4);
}

fn write_series(path: &Path, rows: &[(f64, usize, f64)]) {
    let mut text = String::from("# synthetic\nrate,M,n_ex\n");
    for (v, m, n) in rows {
        text.push_str(&format!("{v:.16e},{m},{n:.16e}\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn fit_scaling_recovers_exponents() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let csv = dir.path().join("series.csv");
    let rates: Vec<f64> = (0..9).map(|i| 1e-3 * 10f64.powf(i as f64 / 4.0)).collect();
    let mut rows: Vec<(f64, usize, f64)> = rates.iter().map(|&v| (v, 0, 0.04 * v.sqrt())).collect();
    rows.extend([4, 8, 16, 32, 64].map(|m| (50.0, m, 0.3 / m as f64)));
    write_series(&csv, &rows);

    let run = cdquench(&["fit-scaling", csv.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let fit: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert!((fit["exponent"].as_f64().unwrap() - 0.5).abs() <= 1e-12);
    assert!((fit["prefactor"].as_f64().unwrap() - 0.04).abs() <= 1e-12);
    assert_eq!(fit["points"], 9);
    assert!(dir.path().join("fit_scaling.json").exists());

    let run = cdquench(&[
        "fit-scaling",
        csv.to_str().unwrap(),
        "--against",
        "cutoff",
        "--rate",
        "50",
        "--out",
        out,
    ]);
    assert_eq!(code(&run), 0);
    let fit: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert!((fit["exponent"].as_f64().unwrap() + 1.0).abs() <= 1e-12);

    let run = cdquench(&[
        "fit-scaling",
        csv.to_str().unwrap(),
        "--window",
        "1e-3,3e-3",
        "--out",
        out,
    ]);
    assert_eq!(code(&run), 2, "too few points in window");
    let run = cdquench(&[
        "fit-scaling",
        csv.to_str().unwrap(),
        "--against",
        "cutoff",
        "--out",
        out,
    ]);
    assert_eq!(code(&run), 2, "missing --rate");
    let run = cdquench(&[
        "fit-scaling",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(code(&run), 2);
}

#[test]
fn fit_scaling_on_engine_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = cdquench(&["fig2", "--n-sites", "400", "--rates", "50", "--out", out]);
    assert_eq!(code(&run), 0);
    let run = cdquench(&[
        "fit-scaling",
        dir.path().join("fig2.csv").to_str().unwrap(),
        "--against",
        "cutoff",
        "--rate",
        "50",
        "--window",
        "4,64",
        "--out",
        out,
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let fit: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    let e = fit["exponent"].as_f64().unwrap();
    assert!((e + 1.0).abs() <= 0.2, "plateau exponent {e}");
}

#[test]
fn lz_demo_traces() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = cdquench(&["lz-demo", "--out", out]);
    assert_eq!(code(&run), 0);
    let text = read(&dir.path().join("lz_demo.csv"));
    assert!(text.lines().any(|l| l == "t,lambda,fidelity_bare,fidelity_cd"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 401);
    let col = |j: usize| rows.iter().map(move |r| r[j].parse::<f64>().unwrap());
    assert!(col(3).all(|f| f >= 1.0 - 1e-8));
    assert!(col(2).fold(1.0, f64::min) < 0.5);

    let run = cdquench(&[
        "lz-demo", "--rate", "0.001", "--span", "5", "--points", "11", "--out", out,
    ]);
    assert_eq!(code(&run), 0);
    let rows = data_rows(&read(&dir.path().join("lz_demo.csv")));
    for r in &rows {
        for j in [2, 3] {
            assert!(r[j].parse::<f64>().unwrap() >= 1.0 - 1e-4);
        }
    }

    let run = cdquench(&["lz-demo", "--delta", "0", "--out", out]);
    assert_eq!(code(&run), 0);
    let rows = data_rows(&read(&dir.path().join("lz_demo.csv")));
    assert_eq!(rows.iter().filter(|r| r[2] == "NaN").count(), 1);
}
