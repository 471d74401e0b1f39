use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gpcurve::datasets;
use gpcurve::finite_model::Monotonicity;
use gpcurve::instruments::{write_quotes, Quote};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpcurve")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Number following `label` in a summary line.
fn summary_value(line: &str, label: &str) -> f64 {
    let rest = &line[line.find(label).unwrap_or_else(|| panic!("`{label}` missing from `{line}`")) + label.len()..];
    rest.trim_start().split(|c: char| c == ';' || c == ',' || c.is_whitespace()).next().unwrap().parse().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

fn write_quote_file(dir: &Path, name: &str, quotes: &[Quote]) -> PathBuf {
    let path = dir.join(name);
    write_quotes(std::fs::File::create(&path).unwrap(), quotes).unwrap();
    path
}

#[test]
fn build_writes_outputs_and_fits_quotes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["build", "--quotes", data("ois.csv").to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(summary_value(&stdout(&o), "market-fit residual") < 1e-8);
    assert!(stdout(&o).contains("acceptance rate"));
    for f in ["band.csv", "mode.csv", "spot.csv", "forward.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("survival.csv").exists());
    let band = csv_rows(&out.join("band.csv"));
    assert_eq!(band[0], ["x", "mode", "lower", "upper", "median"]);
    assert_eq!(band.len(), 402);
    // twelve significant digits
    assert_eq!(band[1][1], "1.00000000000e0");
}

#[test]
fn cds_build_writes_survival_band() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "build",
        "--quotes",
        data("cds.csv").to_str().unwrap(),
        "--discount",
        data("treasury.csv").to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(summary_value(&stdout(&o), "market-fit residual") < 1e-8);
    assert!(dir.path().join("survival.csv").exists());
}

#[test]
fn cds_without_discount_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["build", "--quotes", data("cds.csv").to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("discount"));
}

#[test]
fn malformed_row_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("ois.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "ois,4,not-a-number,0,0.4,1,,";
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, lines.join("\n")).unwrap();
    let o = run(&["build", "--quotes", path.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[parse]"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
}

#[test]
fn too_few_knots_is_rejected_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["build", "--quotes", data("ois.csv").to_str().unwrap(), "--n", "11", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[config]"));
    assert!(!out.exists());
    // at the bound itself the anchor row can still make the system rank deficient
    let o = run(&["build", "--quotes", data("ois.csv").to_str().unwrap(), "--n", "12", "-o", out.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(!stderr(&o).contains("error[config]"));
}

#[test]
fn maturities_beyond_the_domain_abort() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["build", "--quotes", data("ois.csv").to_str().unwrap(), "--set", "upper=30", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("outside the domain"));
}

#[test]
fn increasing_quotes_are_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let quotes = [Quote::bond(1.0, 0.95, 0.0, 1), Quote::bond(2.0, 0.97, 0.0, 1)];
    let path = write_quote_file(dir.path(), "up.csv", &quotes);
    let o = run(&["build", "--quotes", path.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("error[infeasible]"));
}

#[test]
fn fixed_seed_reproduces_every_byte() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("run{k}"))).collect();
    for out in &runs {
        let o = run(&["build", "--quotes", data("ois.csv").to_str().unwrap(), "--seed", "11", "-o", out.to_str().unwrap()]);
        assert!(o.status.success());
    }
    for f in ["band.csv", "mode.csv", "spot.csv", "forward.csv"] {
        assert_eq!(std::fs::read(runs[0].join(f)).unwrap(), std::fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    let other = dir.path().join("other");
    run(&["build", "--quotes", data("ois.csv").to_str().unwrap(), "--seed", "12", "-o", other.to_str().unwrap()]);
    assert_ne!(std::fs::read(runs[0].join("band.csv")).unwrap(), std::fs::read(other.join("band.csv")).unwrap());
}

#[test]
fn sample_writes_one_column_per_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sample", "--quotes", data("ois.csv").to_str().unwrap(), "--samples", "7", "--set", "grid_points=11", "-o", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("samples.csv"));
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[0].len(), 9);
    assert_eq!(rows[0][8], "sample_7");
}

#[test]
fn estimate_recovers_length_scale_within_factor_two() {
    let dir = tempfile::tempdir().unwrap();
    let points: Vec<f64> = (1..=80).map(|k| k as f64 / 2.0).collect();
    let (_, sys) = datasets::simulated_curve(10.0, 1e-2, Monotonicity::NonIncreasing, 160, &points, 4).unwrap();
    // zero-coupon prices pin the curve at each point
    let quotes: Vec<Quote> = points.iter().zip(sys.b.iter()).map(|(&t, &p)| Quote::bond(t, p, 0.0, 2)).collect();
    let path = write_quote_file(dir.path(), "zc.csv", &quotes);
    let o = run(&["estimate", "--quotes", path.to_str().unwrap(), "--n", "160", "--set", "estimate_sigma=false", "-o", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let theta = summary_value(&stdout(&o), "theta");
    assert!((5.0..=20.0).contains(&theta), "theta {theta}");
    assert!(stdout(&o).contains("trace.csv"));
    let trace = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(trace[0], ["theta", "objective"]);
    assert!(trace.len() > 30);
}

#[test]
fn estimate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("e{k}"))).collect();
    for out in &outs {
        let o = run(&["estimate", "--quotes", data("ois.csv").to_str().unwrap(), "--set", "mc_samples=1000", "-o", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["trace.csv", "estimate.csv"] {
        assert_eq!(std::fs::read(outs[0].join(f)).unwrap(), std::fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn infeasible_fold_is_named() {
    let dir = tempfile::tempdir().unwrap();
    // dropping the last price leaves 0.90 at one year below 0.95 at two
    let quotes = [Quote::bond(1.0, 0.90, 0.0, 1), Quote::bond(2.0, 0.95, 0.0, 1), Quote::bond(3.0, 0.80, 0.0, 1)];
    let path = write_quote_file(dir.path(), "bent.csv", &quotes);
    let o = run(&["estimate", "--quotes", path.to_str().unwrap(), "--n", "10", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("fold"), "{}", stderr(&o));
}

fn panel_file(dir: &Path, dates: &[usize]) -> PathBuf {
    let mut text = String::from("file,t\n");
    for &k in dates {
        let src = data(&format!("swap_panel/date_{k}.csv"));
        text.push_str(&format!("{},{}\n", src.display(), datasets::PANEL_DATES[k - 1]));
    }
    let path = dir.join("dates.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn two_date_surface_fits_each_date() {
    let dir = tempfile::tempdir().unwrap();
    let panel = panel_file(dir.path(), &[1, 9]);
    let o = run(&["surface", "--panel", panel.to_str().unwrap(), "--kernel", "gaussian", "-o", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(summary_value(&line, "max per-date residual") < 1e-8, "{line}");
    assert!(line.contains("; 0 monotonicity violations"), "{line}");
    let rows = csv_rows(&dir.path().join("surface.csv"));
    assert_eq!(rows[0], ["x", "t", "mode"]);
    assert_eq!(rows.len(), 1 + 401 * 21);
}

#[test]
fn single_date_surface_falls_back_to_a_curve() {
    let dir = tempfile::tempdir().unwrap();
    let panel = panel_file(dir.path(), &[3]);
    let o = run(&["surface", "--panel", panel.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    assert!(dir.path().join("band.csv").exists());
}

#[test]
fn undersized_surface_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let panel = panel_file(dir.path(), &[1, 2]);
    let o = run(&["surface", "--panel", panel.to_str().unwrap(), "--set", "n_x=3", "--set", "n_t=1", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[config]"));
}

#[test]
fn compare_counts_kriging_violations() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["compare", "--quotes", data("sparse_long.csv").to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("compare.csv"));
    assert_eq!(rows[0], ["x", "constrained", "kriging"]);
    let counts = csv_rows(&dir.path().join("violations.csv"));
    assert_eq!(counts[1], ["constrained", "0"]);
    assert!(counts[2][1].parse::<usize>().unwrap() >= 1);
}

#[test]
fn compare_adds_requested_parametric_fits_on_the_same_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["compare", "--quotes", data("ois.csv").to_str().unwrap(), "--set", "parametric=[\"ns\", \"svensson\"]", "--set", "restarts=5", "-o", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("compare.csv"));
    assert_eq!(rows[0], ["x", "constrained", "kriging", "nelson_siegel", "svensson"]);
    assert!(rows[1..].iter().all(|r| r.len() == 5));
    assert!(dir.path().join("nelson_siegel_params.csv").exists());
    assert!(dir.path().join("svensson_params.csv").exists());
}

#[test]
fn config_sections_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(data("ois.csv"), dir.path().join("ois.csv")).unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "quotes = \"ois.csv\"\nseed = 3\n\n[build]\noutput = \"from_config\"\ngrid_points = 21\nn = 40\n").unwrap();
    let o = run(&["build", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&dir.path().join("from_config/band.csv")).len(), 22);
    let flagged = dir.path().join("from_flag");
    let o = run(&["build", "--config", cfg.to_str().unwrap(), "-o", flagged.to_str().unwrap(), "--set", "grid_points=6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&flagged.join("band.csv")).len(), 7);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[build]\nsmoothness = 3\n").unwrap();
    let o = run(&["build", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("smoothness"));
}
