//! Regenerates the bundled synthetic quote files.

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data").to_string());
    gpcurve::datasets::write_bundle(std::path::Path::new(&dir)).expect("write data files");
    println!("wrote {dir}");
}
