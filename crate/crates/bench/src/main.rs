use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mra_bench::config::{EstimatorId, ExperimentConfig};
use mra_bench::emit;
use mra_bench::experiment::run_experiment;
use mra_bench::BenchError;
use mra_core::estimators::{estimate_ps, estimate_wsc, EstimatorConfig, MomentChoice};
use mra_core::moments::{estimate_sigma, DilationMoments};
use mra_core::signal_model::{
    sigma_for_snr, CorruptionParams, Grid, Model, Sampler, Signal, SpectralSummary, Translation,
    NAMED,
};
use mra_core::wavelet::FilterBank;

#[derive(Parser)]
#[command(
    name = "mra-bench",
    version,
    about = "Power spectrum recovery experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Named test signals.
    Signals {
        #[command(subcommand)]
        action: SignalsAction,
    },
    /// One estimate from one batch; writes the estimator CSV.
    Estimate {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        signal: String,
        #[arg(long, alias = "M")]
        m: usize,
        #[arg(long, conflicts_with = "snr")]
        sigma: Option<f64>,
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long, default_value_t = 0)]
        k: usize,
        #[arg(long, value_enum, default_value = "ps")]
        representation: RepresentationArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SignalsAction {
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Classic,
    Dilation,
    NoisyDilation,
}

#[derive(Clone, Copy, ValueEnum)]
enum RepresentationArg {
    Ps,
    Wsc,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                BenchError::Config(_) => 2,
                _ => 1,
            })
        }
    }
}

fn execute(cmd: Command) -> Result<(), BenchError> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            threads,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(t) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                    .map_err(|e| BenchError::Config(e.to_string()))?;
            }
            let result = run_experiment(&cfg)?;
            let paths = emit::write_all(&cfg.out_dir, &cfg, &result)?;
            print!("{}", emit::summary_text(&emit::summarize(&result.rows)));
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Signals {
            action: SignalsAction::List,
        } => {
            let grid = Grid::standard();
            for s in NAMED {
                println!(
                    "{:<4} {:<40} mean power {:.4e}",
                    s.name(),
                    s.formula(),
                    s.mean_power(&grid)
                );
            }
            Ok(())
        }
        Command::Estimate {
            model,
            signal,
            m,
            sigma,
            snr,
            eta,
            k,
            representation,
            seed,
            out,
        } => {
            let signal = Signal::from_name(&signal)?;
            let grid = Grid::standard();
            let sigma = match (sigma, snr) {
                (Some(s), _) => s,
                (None, Some(r)) => sigma_for_snr(&signal, &grid, r)?,
                (None, None) => 0.0,
            };
            let translation = Translation::support_safe(&grid);
            let (model, params) = match model {
                ModelArg::Classic => (
                    Model::Classic,
                    CorruptionParams::classic(sigma, translation, seed),
                ),
                ModelArg::Dilation => (
                    Model::Dilation,
                    CorruptionParams::dilation(eta, translation, seed),
                ),
                ModelArg::NoisyDilation => (
                    Model::NoisyDilation,
                    CorruptionParams::noisy_dilation(sigma, eta, translation, seed),
                ),
            };
            let mut config = match representation {
                RepresentationArg::Ps => EstimatorConfig::ps(k),
                RepresentationArg::Wsc => EstimatorConfig::wsc(k),
            };
            config.moment_source = MomentChoice::Oracle;
            config
                .check(model)
                .map_err(|e| BenchError::Config(e.to_string()))?;
            let summary = SpectralSummary::compute(&Sampler::new(signal, grid, params, m)?)?;
            let sigma_sq = if model.has_noise() {
                estimate_sigma(&summary)?.sigma_sq
            } else {
                0.0
            };
            let moments = DilationMoments::uniform(eta, k.max(2));
            let output = match representation {
                RepresentationArg::Ps => {
                    estimate_ps(&summary, &config, model, sigma_sq, Some(&moments))?
                }
                RepresentationArg::Wsc => {
                    let bank = FilterBank::standard(&grid, k)?;
                    estimate_wsc(&summary, &config, model, sigma_sq, Some(&moments), &bank)?
                }
            };
            let label = EstimatorId::parse(&config.label())?.label();
            match out {
                Some(p) => {
                    output.write_csv(std::fs::File::create(&p)?, eta, seed)?;
                    println!("{label}: wrote {}", p.display());
                }
                None => output.write_csv(std::io::stdout().lock(), eta, seed)?,
            }
            Ok(())
        }
    }
}
