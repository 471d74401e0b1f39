use std::path::Path;

use gpcurve::datasets;
use gpcurve::instruments::{annual_grid, assemble_system, read_quotes, AssembleOptions, DiscountInput};

fn bundled(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

#[test]
fn bundled_files_match_generators() {
    let dir = tempfile::tempdir().unwrap();
    datasets::write_bundle(dir.path()).unwrap();
    let mut names = vec!["ois.csv", "cds.csv", "sparse_long.csv", "treasury.csv", "swap_panel/dates.csv"].into_iter().map(String::from).collect::<Vec<_>>();
    names.extend((1..=9).map(|k| format!("swap_panel/date_{k}.csv")));
    for name in names {
        let fresh = std::fs::read(dir.path().join(&name)).unwrap();
        let shipped = std::fs::read(bundled(&name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(fresh, shipped, "{name} is stale; regenerate with the write_data example");
    }
}

#[test]
fn bundled_quotes_round_trip() {
    let quotes = read_quotes(std::fs::File::open(bundled("ois.csv")).unwrap()).unwrap();
    assert_eq!(quotes.len(), 14);
    let sys = assemble_system(&quotes, &annual_grid(40), &AssembleOptions::default()).unwrap();
    let c = datasets::ois_curve();
    let p = nalgebra::DVector::from_iterator(40, (1..=40).map(|k| c.discount(k as f64)));
    // twelve significant digits in the file
    assert!(sys.residual_inf(&p) < 1e-12);
    let t = DiscountInput::from_csv(std::fs::File::open(bundled("treasury.csv")).unwrap()).unwrap();
    assert_eq!(t.tenors, datasets::treasury_input().tenors);
}
