//! `pgmt` — reproducible experiments over parabolic measure models.
//!
//! Every subcommand builds a serializable experiment config, runs it, and
//! writes a JSON report whose bytes depend only on the config and the
//! binary. Exit code 0 means every declared check passed, 1 means a check
//! failed, 2 means the invocation or config was invalid.

mod config;
mod run;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CommandCfg, ExperimentConfig, ModelCfg};

#[derive(Parser)]
#[command(
    name = "pgmt",
    version,
    about = "parabolic measure toolkit experiment driver"
)]
struct Cli {
    /// Load a full experiment config (JSON) instead of subcommand flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 50_000)]
    samples: usize,
    /// Worker threads (0 = all cores); never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Optional sample budget; larger requests are clamped and flagged.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also print a human-readable summary to standard output.
    #[arg(long, global = true, default_value_t = false)]
    quiet: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Measure model: flat | vertical-line | kp-cone | holder
    #[arg(long, default_value = "flat")]
    model: String,
    /// Ambient horizontal dimension.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Lacunary base for holder profiles.
    #[arg(long, default_value_t = 4)]
    base: u32,
    /// Cosine layers above the base frequency for holder profiles.
    #[arg(long, default_value_t = 6)]
    levels: u32,
}

impl ModelArgs {
    fn build(&self, seed: u64) -> Result<ModelCfg, String> {
        match self.model.as_str() {
            "flat" => Ok(ModelCfg::Flat { n: self.n }),
            "vertical-line" => Ok(ModelCfg::VerticalLine { n: self.n }),
            "kp-cone" => Ok(ModelCfg::KpCone { n: self.n }),
            "holder" => Ok(ModelCfg::Holder {
                base: self.base,
                levels: self.levels,
                profile_seed: seed,
            }),
            other => Err(format!("unknown model {other:?}")),
        }
    }
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Check ball-mass uniformity of a model.
    VerifyUniform {
        #[command(flatten)]
        model: ModelArgs,
        /// Radii to test (repeatable).
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 1.0])]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        centers: usize,
        /// Allowed density deviation on top of 3 standard errors.
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
    /// Moment curves and the flatness functional.
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1.0)]
        s: f64,
    },
    /// Beta numbers of one ball.
    Beta {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Dyadic cubes, per-cube beta numbers, Carleson bad-mass ratio.
    Bwgl {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 0)]
        root_gen: i32,
        #[arg(long, default_value_t = 2)]
        depth: u32,
        #[arg(long, default_value_t = 0.25)]
        mass_threshold: f64,
    },
    /// Weak-constant-density probe.
    Wcd {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
    },
    /// Area expansion of a quadric graph with fitted coefficients.
    QuadricExpansion {
        /// Symmetric matrix, row-major JSON (e.g. "[[1,0],[0,-1]]").
        #[arg(long)]
        d: String,
        /// Base point, JSON (e.g. "[0.7071,0.7071]").
        #[arg(long)]
        x: String,
        /// Radii; empty uses nine half-octave steps from 1/8 down.
        #[arg(long, value_delimiter = ',', num_args = 0.., default_values_t = Vec::<f64>::new())]
        radii: Vec<f64>,
    },
    /// Certified Hölder graph: box-ball identity and non-flatness trace.
    Counterexample {
        #[arg(long, default_value_t = 4)]
        base: u32,
        #[arg(long, default_value_t = 6)]
        levels: u32,
        #[arg(long, value_delimiter = ',', num_args = 0.., default_values_t = Vec::<f64>::new())]
        scales: Vec<f64>,
    },
    /// Density square function at one center.
    SquareFunction {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
    },
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
            format!(
                "config schema error at line {} column {}: {e}",
                e.line(),
                e.column()
            )
        })?;
        return Ok(config);
    }
    let Some(command) = cli.command.clone() else {
        return Err("either a subcommand or --config is required".into());
    };
    let command = match command {
        Command::VerifyUniform {
            model,
            radii,
            centers,
            tolerance,
        } => CommandCfg::VerifyUniform {
            model: model.build(cli.seed)?,
            radii,
            centers,
            tolerance,
        },
        Command::Moments { model, s } => CommandCfg::Moments {
            model: model.build(cli.seed)?,
            s,
        },
        Command::Beta { model, radius } => CommandCfg::Beta {
            model: model.build(cli.seed)?,
            radius,
        },
        Command::Bwgl {
            model,
            eta,
            root_gen,
            depth,
            mass_threshold,
        } => CommandCfg::Bwgl {
            model: model.build(cli.seed)?,
            eta,
            root_gen,
            depth,
            mass_threshold,
        },
        Command::Wcd {
            model,
            radius,
            epsilon,
        } => CommandCfg::Wcd {
            model: model.build(cli.seed)?,
            radius,
            epsilon,
        },
        Command::QuadricExpansion { d, x, radii } => {
            let d: Vec<Vec<f64>> =
                serde_json::from_str(&d).map_err(|e| format!("bad --d matrix: {e}"))?;
            let x: Vec<f64> =
                serde_json::from_str(&x).map_err(|e| format!("bad --x point: {e}"))?;
            CommandCfg::QuadricExpansion { d, x, radii }
        }
        Command::Counterexample {
            base,
            levels,
            scales,
        } => CommandCfg::Counterexample {
            base,
            levels,
            scales,
        },
        Command::SquareFunction { model, radius, q } => CommandCfg::SquareFunction {
            model: model.build(cli.seed)?,
            radius,
            q,
        },
    };
    Ok(ExperimentConfig {
        command,
        seed: cli.seed,
        samples: cli.samples,
        jobs: cli.jobs,
        budget: cli.budget,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    if config.jobs > 0 {
        // pool size never affects results; reductions are chunk-ordered
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build_global();
    }
    let report = match run::run(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let rendered = serde_json::to_string_pretty(&report).expect("report serializes");
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::File::create(path).and_then(|mut f| {
                f.write_all(rendered.as_bytes())?;
                f.write_all(b"\n")
            }) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
            if !cli.quiet {
                print!("{}", run::human_summary(&report));
            }
        }
        None => println!("{rendered}"),
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
