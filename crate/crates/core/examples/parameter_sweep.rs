//! Sweep the EnGMF bandwidth scaling on the banana problem and report the
//! best value per ensemble size.
//!
//! cargo run --release --example parameter_sweep -- [replicates]

use mfengmf::harness::{run_sweep, ExperimentConfig, FilterKind};

fn main() -> mfengmf::Result<()> {
    let replicates = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let cfg = ExperimentConfig {
        filter: FilterKind::Engmf,
        replicates,
        n_x_grid: vec![10, 25, 50],
        s_x_grid: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
        ..ExperimentConfig::banana()
    };
    let report = run_sweep(&cfg)?;
    for r in report.rows.iter().filter(|r| r.replicate.is_none() && r.metric == "f_divergence") {
        println!("n_x {:3}  s_x {:.1}  mean f-divergence {:.4}", r.n_x, r.s_x.unwrap_or(f64::NAN), r.value.value().unwrap_or(f64::NAN));
    }
    for b in &report.best {
        println!("best at n_x {:3}: s_x = {:?} ({:.4})", b.n_x, b.s_x, b.mean);
    }
    Ok(())
}
