//! Train the Lorenz '96 autoencoder ROM and save it.
//!
//! cargo run --release --example train_rom -- [r_dim] [epochs] [out.json]

use std::path::PathBuf;
use std::time::Instant;

use mfengmf::harness::{train_rom, write_rom, ExperimentConfig};

fn main() -> mfengmf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let r_dim = args.first().and_then(|a| a.parse().ok()).unwrap_or(28);
    let epochs = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(5000);
    let out = PathBuf::from(args.get(2).cloned().unwrap_or_else(|| format!("rom_r{r_dim}.json")));
    let cfg = ExperimentConfig {
        r_dim,
        rom_epochs: epochs,
        ..ExperimentConfig::lorenz96()
    };
    let t0 = Instant::now();
    let (bundle, outcome) = train_rom(&cfg)?;
    println!(
        "r = {r_dim}: loss {:.4} -> {:.4} (ratio {:.1}) in {:.1}s",
        outcome.initial_loss,
        outcome.final_loss,
        outcome.loss_ratio(),
        t0.elapsed().as_secs_f64()
    );
    for (epoch, loss) in outcome.history.iter().enumerate().step_by((epochs / 10).max(1)) {
        println!("  epoch {epoch:5}  loss {loss:.5}");
    }
    write_rom(&bundle, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
