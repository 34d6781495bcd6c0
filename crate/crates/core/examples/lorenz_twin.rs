//! Lorenz '96 twin experiment: free forecast, EnKF, and the multifidelity
//! filters against one truth per replicate.
//!
//! cargo run --release --example lorenz_twin -- <rom.json> [replicates] [steps] [filters...]

use std::time::Instant;

use mfengmf::harness::{mean_and_se, replicate_values, run_lorenz96_with, ExperimentConfig, FilterKind, LorenzSetup, RMSE};
use mfengmf::models::CouplingMap;
use mfengmf::rom::load_rom;

fn main() -> mfengmf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rom = args.first().map(load_rom).transpose()?;
    let replicates = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let steps: usize = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(200);
    let mut filters: Vec<FilterKind> = args.iter().skip(3).filter_map(|a| a.parse().ok()).collect();
    if filters.is_empty() {
        filters = vec![FilterKind::None, FilterKind::Enkf, FilterKind::Amfengmf];
    }
    let setup = LorenzSetup::new(rom.as_ref())?;
    let r_dim = rom.as_ref().map_or(28, |b| b.autoencoder.reduced_dim());

    for filter in filters {
        let cfg = ExperimentConfig {
            filter,
            replicates,
            steps,
            spinup: steps / 6,
            r_dim,
            alpha_x: if filter == FilterKind::Enkf { 1.1 } else { 1.0 },
            ..ExperimentConfig::lorenz96()
        };
        let t0 = Instant::now();
        let rows = run_lorenz96_with(&setup, &cfg)?;
        let v = replicate_values(&rows, RMSE);
        let finite: Vec<f64> = v.iter().flatten().copied().collect();
        let (m, se, _) = mean_and_se(&finite);
        println!(
            "{:9} rmse {m:.4} ± {se:.4}  diverged {}  {:.1}s",
            filter.name(),
            v.len() - finite.len(),
            t0.elapsed().as_secs_f64()
        );
        if filter.is_adaptive() {
            let last: Vec<String> = rows
                .iter()
                .filter(|r| r.replicate == Some(0) && r.metric.ends_with(&format!("@{}", steps - 1)))
                .map(|r| format!("{} = {:.3}", r.metric, r.value.value().unwrap_or(f64::NAN)))
                .collect();
            println!("          final trust (replicate 0): {}", last.join(", "));
        }
    }
    Ok(())
}
