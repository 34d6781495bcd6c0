use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mfengmf::gmu::Linearization;
use mfengmf::harness::{
    emit_csv, make_truth, metadata_path, run_banana, run_lorenz96, run_sweep, train_rom, training_rows,
    write_metadata, write_rom, Experiment, ExperimentConfig, FilterKind, ResultRow,
};
use mfengmf::metrics::MetricDensity;
use mfengmf::{Error, Result};

#[derive(Parser)]
#[command(name = "mfengmf", version, about = "Multifidelity ensemble Gaussian mixture filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Banana problem Monte Carlo run.
    Banana(Overrides),
    /// Lorenz '96 twin experiment.
    L96(Overrides),
    /// Cartesian parameter sweep with argmin report.
    Sweep(Overrides),
    /// Train the autoencoder ROM and write it to `--rom`.
    TrainRom(Overrides),
    /// Write Lorenz '96 truth trajectories and observations.
    MakeTruth(Overrides),
}

/// Every flag overrides the matching config field.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// JSON document with config fields; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<Experiment>,
    #[arg(long)]
    filter: Option<FilterKind>,
    #[arg(long)]
    n_x: Option<usize>,
    #[arg(long)]
    n_u: Option<usize>,
    #[arg(long)]
    r_dim: Option<usize>,
    #[arg(long)]
    s_x: Option<f64>,
    #[arg(long)]
    s_u: Option<f64>,
    #[arg(long)]
    alpha_x: Option<f64>,
    #[arg(long)]
    alpha_u: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    spinup: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rom: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    defensive: Option<f64>,
    #[arg(long)]
    localization_radius: Option<f64>,
    #[arg(long, value_parser = parse_linearization)]
    linearization: Option<Linearization>,
    #[arg(long)]
    em_ascent_steps: Option<usize>,
    #[arg(long)]
    em_step_size: Option<f64>,
    #[arg(long)]
    em_fd_step: Option<f64>,
    #[arg(long)]
    em_samples: Option<usize>,
    #[arg(long)]
    em_summed: Option<bool>,
    #[arg(long)]
    s_min: Option<f64>,
    #[arg(long, value_parser = parse_metric_density)]
    metric_density: Option<MetricDensity>,
    #[arg(long)]
    grid_nodes: Option<usize>,
    #[arg(long)]
    density_dump: Option<PathBuf>,
    #[arg(long)]
    divergence_factor: Option<f64>,
    #[arg(long)]
    no_filter_level: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    n_x_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    s_x_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    s_u_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    alpha_x_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    alpha_u_grid: Option<Vec<f64>>,
    #[arg(long)]
    rom_samples: Option<usize>,
    #[arg(long)]
    rom_epochs: Option<usize>,
    #[arg(long)]
    rom_hidden: Option<usize>,
    #[arg(long)]
    rom_lambda: Option<f64>,
    /// Full-size replicate and step counts.
    #[arg(long)]
    paper_scale: bool,
}

fn parse_json_enum<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_linearization(s: &str) -> std::result::Result<Linearization, String> {
    parse_json_enum(s)
}

fn parse_metric_density(s: &str) -> std::result::Result<MetricDensity, String> {
    parse_json_enum(s)
}

macro_rules! overlay {
    ($cfg:ident, $o:ident; $($field:ident),* ; $($opt:ident),*) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
        $(if let Some(v) = $o.$opt.clone() { $cfg.$opt = Some(v); })*
    };
}

impl Overrides {
    fn resolve(&self, default_experiment: Experiment) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(path) => Some(std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?),
            None => None,
        };
        let from_file = match &text {
            Some(t) => {
                let v: serde_json::Value = serde_json::from_str(t).map_err(|e| Error::Config(format!("config is not JSON: {e}")))?;
                v.get("experiment")
                    .map(|e| serde_json::from_value::<Experiment>(e.clone()))
                    .transpose()
                    .map_err(|e| Error::Config(e.to_string()))?
            }
            None => None,
        };
        let experiment = self.experiment.or(from_file).unwrap_or(default_experiment);
        let mut cfg = ExperimentConfig::for_experiment(experiment);
        if let Some(t) = &text {
            cfg = cfg.merge_json(t)?;
        }
        if self.paper_scale || cfg.paper_scale {
            cfg.apply_paper_scale();
        }
        let o = self;
        overlay!(cfg, o;
            experiment, filter, n_x, n_u, r_dim, s_x, s_u, alpha_x, alpha_u, replicates, steps, spinup, seed,
            defensive, linearization, em_ascent_steps, em_step_size, em_fd_step, em_summed, s_min, metric_density,
            grid_nodes, divergence_factor, no_filter_level, n_x_grid, s_x_grid, s_u_grid, alpha_x_grid,
            alpha_u_grid, rom_samples, rom_epochs, rom_hidden, rom_lambda;
            rom, output, localization_radius, em_samples, density_dump);
        Ok(cfg)
    }
}

fn default_output(cfg: &ExperimentConfig, stem: &str) -> PathBuf {
    cfg.output
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(format!("{stem}.csv")))
}

fn write_rows(rows: &[ResultRow], path: &Path, cfg: &ExperimentConfig, command: &str, extra: serde_json::Value) -> Result<()> {
    emit_csv(rows, path)?;
    write_metadata(path, cfg, command, extra)?;
    println!("wrote {} and {}", path.display(), metadata_path(path).display());
    Ok(())
}

fn summarize(rows: &[ResultRow]) {
    for r in rows.iter().filter(|r| r.replicate.is_none()) {
        match r.value.value() {
            Some(v) => println!("{:9} n_x={:<4} {:20} {v:.6}", r.filter, r.n_x, r.metric),
            None => println!("{:9} n_x={:<4} {:20} diverged", r.filter, r.n_x, r.metric),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::Banana(o) => {
            let cfg = o.resolve(Experiment::Banana)?;
            if cfg.experiment != Experiment::Banana {
                return Err(Error::Config("`banana` runs experiment = banana".into()));
            }
            let rows = run_banana(&cfg)?;
            summarize(&rows);
            let path = default_output(&cfg, &format!("banana_{}", cfg.filter));
            write_rows(&rows, &path, &cfg, "banana", serde_json::json!({ "grid_nodes": cfg.grid_nodes }))
        }
        Command::L96(o) => {
            let cfg = o.resolve(Experiment::Lorenz96)?;
            if cfg.experiment != Experiment::Lorenz96 {
                return Err(Error::Config("`l96` runs experiment = lorenz96".into()));
            }
            let rows = run_lorenz96(&cfg)?;
            summarize(&rows);
            let path = default_output(&cfg, &format!("l96_{}", cfg.filter));
            write_rows(&rows, &path, &cfg, "l96", serde_json::json!({}))
        }
        Command::Sweep(o) => {
            let cfg = o.resolve(Experiment::Lorenz96)?;
            let report = run_sweep(&cfg)?;
            for b in &report.best {
                println!(
                    "best {:9} n_x={:<4} mean {:.6}  s_x={:?} s_u={:?} alpha_x={:?} alpha_u={:?}",
                    b.filter, b.n_x, b.mean, b.s_x, b.s_u, b.alpha_x, b.alpha_u
                );
            }
            let path = default_output(&cfg, &format!("sweep_{}_{}", cfg.experiment.name(), cfg.filter));
            write_rows(&report.rows, &path, &cfg, "sweep", serde_json::json!({ "argmin": report.best }))
        }
        Command::TrainRom(o) => {
            let mut cfg = o.resolve(Experiment::Lorenz96)?;
            cfg.experiment = Experiment::Lorenz96;
            let rom_path = cfg
                .rom
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("rom_r{}.json", cfg.r_dim)));
            let (bundle, outcome) = train_rom(&cfg)?;
            write_rom(&bundle, &rom_path)?;
            println!(
                "trained r = {}: loss {:.5} -> {:.5} (ratio {:.1}); wrote {}",
                cfg.r_dim,
                outcome.initial_loss,
                outcome.final_loss,
                outcome.loss_ratio(),
                rom_path.display()
            );
            if let Some(path) = &cfg.output {
                let rows = training_rows(&cfg, &outcome, started.elapsed().as_secs_f64());
                write_rows(&rows, path, &cfg, "train-rom", serde_json::json!({ "rom": rom_path }))?;
            }
            Ok(())
        }
        Command::MakeTruth(o) => {
            let mut cfg = o.resolve(Experiment::Lorenz96)?;
            cfg.experiment = Experiment::Lorenz96;
            if cfg.replicates == 0 {
                return Err(Error::Config("replicates must be at least 1".into()));
            }
            let path = default_output(&cfg, "truth");
            make_truth(&cfg, &path)?;
            write_metadata(&path, &cfg, "make-truth", serde_json::json!({ "observation_noise_variance": 0.25 }))?;
            println!("wrote {} and {}", path.display(), metadata_path(&path).display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
