use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pbl_core::experiments::{
    write_fig_a, write_fig_b, write_fig_c, write_selection_distribution, write_validate,
    LinearConfig, SineConfig, ValidateConfig, DEFAULT_LINEAR_SEED, DEFAULT_SINE_SEED,
    DEFAULT_VALIDATE_SEED,
};
use pbl_core::tasks::LinearTaskSpec;
use pbl_core::{ModelConfig, PblError, SubGammaParams};

/// PAC-Bayesian bounds and Bayesian evidence for linear regression.
#[derive(Parser, Debug)]
#[command(name = "pbl", version)]
struct Cli {
    /// Master seed. Falls back to PBL_SEED, then to the subcommand default.
    #[arg(long, global = true, env = "PBL_SEED")]
    seed: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Posterior mean predictions of polynomial models on the sine task.
    FigA(SineArgs),
    /// Evidence decomposition per polynomial degree, plus selection bounds.
    FigB(FigBArgs),
    /// Bound comparison on the linear task across sample sizes.
    FigC(FigCArgs),
    /// Coverage study of the bounds and the sub-gamma MGF check.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct SineArgs {
    #[arg(long, default_value_t = 0.5)]
    sigma2: f64,
    #[arg(long = "sigma-pi2", default_value_t = 200.0)]
    sigma_pi2: f64,
    /// Comma-separated polynomial degrees, each at least 1.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1,2,3,4,5,6,7",
        value_parser = clap::value_parser!(u64).range(1..)
    )]
    degrees: Vec<u64>,
    /// Training sample size.
    #[arg(long, default_value_t = 15)]
    n: usize,
    /// Label noise variance of the task.
    #[arg(long, default_value_t = 0.25)]
    noise_var: f64,
    #[arg(long, default_value_t = 200)]
    grid_size: usize,
}

#[derive(Args, Debug)]
struct FigBArgs {
    #[command(flatten)]
    sine: SineArgs,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    /// Report the degree selected on K consecutive seeds instead of one run.
    #[arg(long, value_name = "K")]
    seeds: Option<usize>,
    /// Sub-gamma variance factor used by the selection bounds.
    #[arg(long, default_value_t = 0.0)]
    s2: f64,
    /// Sub-gamma scale used by the selection bounds.
    #[arg(long, default_value_t = 0.0)]
    c: f64,
}

#[derive(Args, Debug)]
struct FigCArgs {
    #[arg(long, default_value_t = 2.0)]
    sigma2: f64,
    #[arg(long = "sigma-pi2", default_value_t = 0.01)]
    sigma_pi2: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "10,100,1000,10000,100000,1000000"
    )]
    n_grid: Vec<usize>,
    /// Interval of the cropped loss.
    #[arg(long, num_args = 2, value_names = ["A", "B"], default_values_t = [1.0, 4.0])]
    crop: Vec<f64>,
    /// Posterior samples for the cropped empirical risk.
    #[arg(long, default_value_t = 10_000)]
    mc_weights: usize,
    /// Posterior samples for the generalization oracle.
    #[arg(long, default_value_t = 100_000)]
    mc_test: usize,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    w_star_norm: f64,
    #[arg(long, default_value_t = 1.0 / 9.0)]
    noise_var: f64,
    /// Cap on weights × n × d for the cropped empirical risk.
    #[arg(long, default_value_t = 2_000_000_000)]
    work_budget: usize,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma2: f64,
    #[arg(long = "sigma-pi2", default_value_t = 0.01)]
    sigma_pi2: f64,
    #[arg(long, num_args = 2, value_names = ["A", "B"], default_values_t = [1.0, 4.0])]
    crop: Vec<f64>,
    /// Posterior samples per trial.
    #[arg(long, default_value_t = 1_000)]
    mc_weights: usize,
    /// Fresh test points per posterior sample for the cropped risk.
    #[arg(long, default_value_t = 100)]
    mc_test: usize,
    /// Samples of the MGF check.
    #[arg(long, default_value_t = 1_000_000)]
    mgf_samples: usize,
}

impl SineArgs {
    fn config(&self, seed: u64) -> SineConfig {
        SineConfig {
            seed,
            n: self.n,
            noise_var: self.noise_var,
            model: ModelConfig {
                noise_var: self.sigma2,
                prior_var: self.sigma_pi2,
            },
            degrees: self.degrees.iter().map(|&d| d as usize).collect(),
            grid_size: self.grid_size,
            ..SineConfig::default()
        }
    }
}

fn run(cli: Cli) -> Result<Vec<String>, PblError> {
    let out = &cli.out;
    std::fs::create_dir_all(out).map_err(|e| PblError::io(out, e))?;
    match cli.command {
        Command::FigA(args) => {
            let cfg = args.config(cli.seed.unwrap_or(DEFAULT_SINE_SEED));
            report_paths(&write_fig_a(out, &cfg)?);
            Ok(vec![])
        }
        Command::FigB(args) => {
            let cfg = SineConfig {
                delta: args.delta,
                test_size: args.test_size,
                selection_params: SubGammaParams {
                    s2: args.s2,
                    c: args.c,
                    lambda_used: 1.0,
                },
                ..args.sine.config(cli.seed.unwrap_or(DEFAULT_SINE_SEED))
            };
            if let Some(k) = args.seeds {
                let (picks, path) = write_selection_distribution(out, &cfg, k)?;
                for &degree in &cfg.degrees {
                    let count = picks.iter().filter(|p| p.1 == degree).count();
                    println!("degree {degree}: selected on {count} of {k} seeds");
                }
                report_paths(&[path]);
                return Ok(vec![]);
            }
            let (fig, paths) = write_fig_b(out, &cfg)?;
            println!("selected degree: {}", fig.argmin_degree());
            report_paths(&paths);
            Ok(fig.invariant_failures())
        }
        Command::FigC(args) => {
            let cfg = LinearConfig {
                seed: cli.seed.unwrap_or(DEFAULT_LINEAR_SEED),
                d: args.d,
                w_star_norm: args.w_star_norm,
                noise_var: args.noise_var,
                model: ModelConfig {
                    noise_var: args.sigma2,
                    prior_var: args.sigma_pi2,
                },
                delta: args.delta,
                crop: (args.crop[0], args.crop[1]),
                n_grid: args.n_grid,
                mc_weights: args.mc_weights,
                mc_gen: args.mc_test,
                work_budget: args.work_budget,
                ..LinearConfig::default()
            };
            let (fig, paths) = write_fig_c(out, &cfg)?;
            println!("s2 = {}, c = {}", fig.subgamma.s2, fig.subgamma.c);
            report_paths(&paths);
            Ok(fig.invariant_failures())
        }
        Command::Validate(args) => {
            let mut cfg = ValidateConfig::with_seed(cli.seed.unwrap_or(DEFAULT_VALIDATE_SEED));
            let s = &mut cfg.study;
            s.trials = args.trials;
            s.n = args.n;
            s.delta = args.delta;
            s.model = ModelConfig {
                noise_var: args.sigma2,
                prior_var: args.sigma_pi2,
            };
            s.task.w_star = LinearTaskSpec::isotropic_target(args.d, 0.5);
            s.crop = Some((args.crop[0], args.crop[1]));
            s.m_weights = args.mc_weights;
            s.m_test = args.mc_test;
            cfg.mgf.samples = args.mgf_samples;
            let (v, paths) = write_validate(out, &cfg)?;
            for f in &v.coverage.families {
                println!(
                    "{:?}: {} of {} trials violated",
                    f.family, f.violations, f.trials
                );
            }
            report_paths(&paths);
            Ok(v.invariant_failures())
        }
    }
}

fn report_paths(paths: &[impl AsRef<Path>]) {
    for p in paths {
        println!("wrote {}", p.as_ref().display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in failures {
                eprintln!("invariant failure: {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
