//! All six filters on the banana problem, with paired differences against
//! the EnGMF.
//!
//! cargo run --release --example banana_filters -- [replicates] [n_x] [n_u]

use std::time::Instant;

use mfengmf::harness::{mean_and_se, run_banana_with, replicate_values, BananaSetup, ExperimentConfig, FilterKind, F_DIVERGENCE};

fn main() -> mfengmf::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let replicates = args.first().copied().unwrap_or(200);
    let n_x = args.get(1).copied().unwrap_or(25);
    let n_u = args.get(2).copied().unwrap_or(50);
    let setup = BananaSetup::new(601)?;

    let mut baseline: Option<Vec<Option<f64>>> = None;
    for filter in [
        FilterKind::Engmf,
        FilterKind::Enkf,
        FilterKind::Mfenkf,
        FilterKind::Mfengmf,
        FilterKind::Aengmf,
        FilterKind::Amfengmf,
    ] {
        let cfg = ExperimentConfig {
            filter,
            n_x,
            n_u,
            replicates,
            ..ExperimentConfig::banana()
        };
        let t0 = Instant::now();
        let rows = run_banana_with(&setup, &cfg)?;
        let d = replicate_values(&rows, F_DIVERGENCE);
        let finite: Vec<f64> = d.iter().flatten().copied().collect();
        let (m, se, _) = mean_and_se(&finite);
        let paired = baseline.as_ref().map(|b| {
            let diffs: Vec<f64> = d.iter().zip(b).filter_map(|(a, b)| Some((*a)? - (*b)?)).collect();
            mean_and_se(&diffs)
        });
        print!("{:9} mean {m:9.4} ± {se:.4}", filter.name());
        if let Some((dm, dse, _)) = paired {
            print!("   vs engmf {dm:+.4} ± {dse:.4}");
        }
        println!("   diverged {}   {:.1}s", d.len() - finite.len(), t0.elapsed().as_secs_f64());
        baseline.get_or_insert(d);
    }
    Ok(())
}
