use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jccopf::io::commands::{
    cmd_compare, cmd_evaluate, cmd_solve, cmd_validate, configure_threads_from_env, CommandOutput,
    SolveArgs,
};
use jccopf::io::config::{PartialConfig, RunConfig};
use jccopf::{Error, MethodId};

#[derive(Parser)]
#[command(
    name = "jccopf",
    version,
    about = "Joint chance-constrained DC optimal power flow with wind uncertainty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one method and write dispatch.csv, trace.csv and summary.csv.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Method to run.
        #[arg(long, default_value = "iterative")]
        method: MethodId,
        /// Solve-side wind scenarios (t,s,w_1,...) instead of drawing them.
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
    /// Run several methods on shared scenarios and write cost, PoS and
    /// violation tables.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods (default: all).
        #[arg(long, value_delimiter = ',')]
        method: Option<Vec<String>>,
    },
    /// Estimate the per-step probability of success of a saved dispatch.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// dispatch.csv written by `solve`.
        #[arg(long)]
        dispatch: PathBuf,
    },
    /// Parse and check a case file.
    Validate {
        #[arg(long)]
        case: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Case file (JSON).
    #[arg(long)]
    case: PathBuf,
    /// JSON file with default settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Joint violation probability per step.
    #[arg(long)]
    alpha: Option<f64>,
    /// Violation probability of the power balance constraint.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Solve-side scenarios per step.
    #[arg(long)]
    samples: Option<usize>,
    /// Evaluation scenarios per step.
    #[arg(long)]
    eval_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_seed: Option<u64>,
    /// Relative objective change that ends the iteration.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    /// Record wall-clock times in trace and summary files.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn resolve(&self, methods: Option<Vec<String>>) -> jccopf::Result<RunConfig> {
        let flags = PartialConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            n_samples: self.samples,
            n_eval: self.eval_samples,
            seed: self.seed,
            eval_seed: self.eval_seed,
            tolerance: self.tol,
            max_iter: self.max_iter,
            methods,
            out: self.out.clone(),
        };
        let file = match &self.config {
            Some(p) => PartialConfig::load(p)?,
            None => PartialConfig::default(),
        };
        RunConfig::resolve(flags.or(file))
    }
}

fn run(cli: Cli) -> jccopf::Result<CommandOutput> {
    configure_threads_from_env()?;
    match cli.command {
        Command::Solve {
            common,
            method,
            scenarios,
        } => {
            let cfg = common.resolve(None)?;
            let args = SolveArgs {
                case: common.case.clone(),
                method,
                scenarios,
                force: common.force,
                timing: common.timing,
            };
            cmd_solve(&args, &cfg)
        }
        Command::Compare { common, method } => {
            let cfg = common.resolve(method)?;
            cmd_compare(&common.case, &cfg, common.force, common.timing)
        }
        Command::Evaluate { common, dispatch } => {
            let cfg = common.resolve(None)?;
            cmd_evaluate(&common.case, &dispatch, &cfg, common.force)
        }
        Command::Validate { case } => cmd_validate(&case),
    }
}

fn report_error(e: &Error) {
    match e {
        Error::Invalid(diags) => {
            for d in diags {
                eprintln!("error: {d}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            for m in &out.messages {
                eprintln!("{m}");
            }
            for f in &out.files {
                println!("{}", f.display());
            }
            ExitCode::from(out.exit_code.clamp(0, 255) as u8)
        }
        Err(e) => {
            report_error(&e);
            ExitCode::from(2)
        }
    }
}
