//! Grid densities and ensembles of one banana replicate for the four
//! non-adaptive filters, as JSON for contour plots.
//!
//! cargo run --release --example density_dump -- [out_dir]

use std::path::PathBuf;

use mfengmf::harness::{run_banana, ExperimentConfig, FilterKind};

fn main() -> mfengmf::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "dumps".into()));
    for filter in [FilterKind::Enkf, FilterKind::Engmf, FilterKind::Mfenkf, FilterKind::Mfengmf] {
        let path = dir.join(format!("banana_{filter}.json"));
        let cfg = ExperimentConfig {
            filter,
            replicates: 1,
            density_dump: Some(path.clone()),
            ..ExperimentConfig::banana()
        };
        let rows = run_banana(&cfg)?;
        println!("{filter:8} f-divergence {:?} -> {}", rows[0].value.value(), path.display());
    }
    Ok(())
}
