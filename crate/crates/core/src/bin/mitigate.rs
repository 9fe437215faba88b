use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use mitigate::experiment::{
    aggregate, aggregate_csv, collect_results, run_experiment, ExperimentConfig, ExperimentError,
};
use mitigate::synth::{make_synthetic, SyntheticSpec};
use mitigate::{inject_all, load_graph, save_graph, InjectionConfig, Strategy};

#[derive(Parser)]
#[command(
    name = "mitigate",
    version,
    about = "Active anomaly discovery on attributed graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic attributed graph (no anomalies).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3000)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 64)]
        attr_dim: usize,
        #[arg(long, default_value_t = 0.006)]
        intra_p: f64,
        #[arg(long, default_value_t = 0.0003)]
        inter_p: f64,
        #[arg(long, default_value_t = 1.0)]
        signal: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Inject structural and contextual anomalies into a dataset.
    Inject {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15)]
        p: usize,
        #[arg(long, default_value_t = 5)]
        q: usize,
        #[arg(long, default_value_t = 50)]
        k_cand: usize,
        #[arg(long, default_value_t = 75)]
        n_contextual: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the seed list, e.g. `0,1,2`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        budget: Option<usize>,
        /// Override the strategies, e.g. `mitigate,random`.
        #[arg(long, value_delimiter = ',')]
        strategy: Option<Vec<Strategy>>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-round selection dumps.
        #[arg(long)]
        debug_dump: bool,
    },
    /// Aggregate run JSON files into a results table.
    Compare {
        /// Directories or files containing run JSON.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run_command(cmd: Command) -> Result<(), ExperimentError> {
    match cmd {
        Command::Synth {
            out,
            n,
            classes,
            attr_dim,
            intra_p,
            inter_p,
            signal,
            noise,
            seed,
        } => {
            let spec = SyntheticSpec {
                n,
                num_classes: classes,
                attr_dim,
                intra_p,
                inter_p,
                feature_signal: signal,
                feature_noise: noise,
            };
            spec.validate()
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
            let g = make_synthetic(&spec, seed)?;
            save_graph(&g, &out)?;
            println!(
                "wrote {} nodes, {} edges to {}",
                g.n(),
                g.adjacency().nnz() / 2,
                out.display()
            );
        }
        Command::Inject {
            input,
            out,
            p,
            q,
            k_cand,
            n_contextual,
            seed,
        } => {
            let g = load_graph(&input)?;
            let cfg = InjectionConfig {
                p,
                q,
                k_cand,
                n_contextual,
                seed,
            };
            cfg.validate(g.n())
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
            let (injected, report) = inject_all(&g, &cfg)?;
            save_graph(&injected, &out)?;
            let path = out.join("injection_report.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)?)
                .map_err(|source| ExperimentError::Io { path, source })?;
            println!(
                "injected {} structural and {} contextual anomalies into {}",
                report.structural_ids.len(),
                report.contextual_ids.len(),
                out.display()
            );
        }
        Command::Run {
            config,
            seeds,
            budget,
            strategy,
            out,
            debug_dump,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(b) = budget {
                cfg.budget = b;
            }
            if let Some(s) = strategy {
                cfg.strategies = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.debug_dump |= debug_dump;
            let outcome = run_experiment(&cfg)?;
            print!("{}", aggregate_csv(&outcome.aggregate));
            if !outcome.failures.is_empty() {
                return Err(ExperimentError::PartialFailure {
                    failed: outcome.failures.len(),
                    total: outcome.failures.len() + outcome.results.len(),
                });
            }
        }
        Command::Compare { inputs, out } => {
            let results = collect_results(&inputs)?;
            let table = aggregate_csv(&aggregate(&results));
            match out {
                Some(path) => std::fs::write(&path, &table)
                    .map_err(|source| ExperimentError::Io { path, source })?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run_command(cli.command).context("mitigate failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = err
                .downcast_ref::<ExperimentError>()
                .map(ExperimentError::exit_code)
                .unwrap_or(2);
            eprintln!("error: {err:#}");
            ExitCode::from(code as u8)
        }
    }
}
