use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coop_pliable::simgen::{preset, SecondViewRule, SimScenario};
use coop_pliable::{FoldSpec, Method, PrepareOptions, SolverConfig};
use coop_pliable_cli::commands::{self, BenchConfig, FitRequest};
use coop_pliable_cli::config::{parse_methods, parse_rho_grid, with_workers, RunConfig};
use coop_pliable_cli::io::IngestOptions;

/// Cooperative pliable lasso experiments.
///
/// Worker threads default to the number of cores; set COOPLIABLE_WORKERS to
/// override.
#[derive(Parser)]
#[command(name = "coopliable", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (train/, test/, truth.json).
    Simulate(SimulateArgs),
    /// Fit one method with cross-validation.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Run a replicate x method x scenario benchmark.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Preset name (lowdim-1..4, highdim-1..4).
    #[arg(long, conflicts_with = "scenario")]
    preset: Option<String>,
    /// JSON scenario file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the training size.
    #[arg(long)]
    n: Option<usize>,
    /// Override the features per source.
    #[arg(long)]
    p: Option<usize>,
    /// Override the test size.
    #[arg(long)]
    n_test: Option<usize>,
    /// Build the second source from the first, as in the literal recipe.
    #[arg(long)]
    copy_first: bool,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<Vec<SimScenario>> {
        let mut out = match (&self.preset, &self.scenario) {
            (Some(names), None) => names.split(',').map(|n| preset(n.trim()).map_err(Into::into)).collect::<Result<Vec<_>>>()?,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                vec![serde_json::from_str(&text).with_context(|| format!("invalid scenario file {}", path.display()))?]
            }
            _ => bail!("give --preset or --scenario"),
        };
        for s in &mut out {
            if self.n.is_some() || self.p.is_some() || self.n_test.is_some() {
                let (n, p, t) = (self.n.unwrap_or(s.n), self.p.unwrap_or(s.p1), self.n_test.unwrap_or(s.n_test));
                *s = s.clone().scaled(n, p, t);
            }
            if self.copy_first {
                s.second_view = SecondViewRule::CopyFirst;
            }
        }
        Ok(out)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 50)]
    n_lambda: usize,
    #[arg(long)]
    lambda_min_ratio: Option<f64>,
    #[arg(long, default_value_t = 1e-5)]
    conv_tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    kkt_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// rho grid: `a..b` (inclusive integers) or a comma list.
    #[arg(long, default_value = "0..9")]
    rho_grid: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Keep X1, X2 on their original scale.
    #[arg(long)]
    no_standardize_x: bool,
    /// Standardize the modifier columns too.
    #[arg(long)]
    standardize_z: bool,
}

impl SolverArgs {
    fn solver(&self) -> SolverConfig {
        SolverConfig {
            alpha: self.alpha,
            n_lambda: self.n_lambda,
            lambda_min_ratio: self.lambda_min_ratio,
            conv_tol: self.conv_tol,
            kkt_tol: self.kkt_tol,
            max_iter: self.max_iter,
            ..SolverConfig::default()
        }
    }

    fn prepare(&self) -> PrepareOptions {
        PrepareOptions {
            standardize_x: !self.no_standardize_x,
            standardize_z: self.standardize_z,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Data directory: `simulate` output or a directory with x1/x2/z/y.csv.
    #[arg(long)]
    data: PathBuf,
    /// Test directory (defaults to DATA/test when present).
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    method: Method,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV with a header and one group id per training row; groups stay
    /// within one fold.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Modifier column to expand into indicators (repeatable).
    #[arg(long = "categorical")]
    categorical: Vec<String>,
    /// Drop the first level of each categorical modifier.
    #[arg(long)]
    reference_coding: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory with x1.csv, x2.csv, z.csv (y.csv optional).
    #[arg(long)]
    data: PathBuf,
    /// Where to write predictions.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma list of methods, or `all`.
    #[arg(long, default_value = "all")]
    methods: String,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also score interaction-level selection.
    #[arg(long)]
    interaction_selection: bool,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => {
            let scenarios = args.scenario.resolve()?;
            if scenarios.len() != 1 {
                bail!("simulate takes a single scenario");
            }
            let scenario = scenarios[0].clone().with_seed(args.seed);
            let sim = commands::simulate(&scenario, &args.out)?;
            println!(
                "{}: {} train rows, {} test rows, sigma {:.6}, realized SNR {:.6}",
                scenario.name,
                sim.train.n(),
                sim.test.n(),
                sim.truth.sigma,
                sim.truth.realized_snr
            );
        }
        Command::Fit(args) => {
            let config = RunConfig {
                method: args.method,
                solver: args.solver.solver(),
                rho_grid: parse_rho_grid(&args.solver.rho_grid)?.values().to_vec(),
                folds: FoldSpec {
                    n_folds: args.solver.folds,
                    seed: args.seed,
                    grouping: None,
                },
                prepare: args.solver.prepare(),
                ingest: IngestOptions {
                    categorical: args.categorical,
                    reference_coding: args.reference_coding,
                },
                seed: args.seed,
            };
            let request = FitRequest {
                data: args.data,
                test: args.test,
                groups: args.groups,
                out: args.out,
                config,
            };
            let m = with_workers(|| commands::fit(&request))??;
            print!("{}: lambda {:.6}", m.method, m.selected_lambda);
            if let Some(rho) = m.selected_rho {
                print!(", rho {rho}");
            }
            print!(", train MSE {:.6}", m.train_mse);
            if let Some(t) = m.test_mse {
                print!(", test MSE {t:.6}");
            }
            println!(", {} main effects, {} interactions", m.main_effects, m.interactions);
        }
        Command::Predict(args) => {
            let o = commands::predict(&args.model, &args.data, args.out.as_deref())?;
            print!("{} predictions, sha256 {}", o.n, o.sha256);
            if let Some(e) = o.mse {
                print!(", MSE {e:.6}");
            }
            println!();
        }
        Command::Bench(args) => {
            let config = BenchConfig {
                scenarios: args.scenario.resolve()?,
                methods: parse_methods(&args.methods)?,
                replicates: args.replicates,
                seed: args.seed,
                rho_grid: parse_rho_grid(&args.solver.rho_grid)?.values().to_vec(),
                solver: args.solver.solver(),
                n_folds: args.solver.folds,
                prepare: args.solver.prepare(),
                interaction_selection: args.interaction_selection,
            };
            let results = with_workers(|| commands::bench(&config))??;
            commands::write_bench(&results, &args.out)?;
            println!(
                "{} cells, {} failed; results in {}",
                results.cells.len(),
                results.failures,
                args.out.display()
            );
        }
    }
    Ok(())
}
