use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use fliphat::checks::{run_suite, Suite};
use fliphat::config::{ExperimentConfig, KEYS};
use fliphat::plot::{emit_svg_plot, PLOT_FILE};
use fliphat::report::{emit_csv, emit_json, emit_traces};
use fliphat::sweep::run_sweep;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Private sparse linear contextual bandit experiments.
#[derive(Parser)]
#[command(name = "fliphat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a dimension × privacy sweep and write its reports.
    Run {
        /// Config file of `key = value` lines; missing keys take their defaults.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, env = "FLIPHAT_OUT_DIR", default_value = "fliphat-out")]
        out_dir: PathBuf,
        /// Worker threads, overriding the config's `parallelism`.
        #[arg(long)]
        parallel: Option<usize>,
        /// Also write regret_vs_d.svg.
        #[arg(long)]
        plot: bool,
        /// Also write one per-step trace CSV per cell under traces/.
        #[arg(long)]
        traces: bool,
    },
    /// Run an acceptance suite: fast, desk or all.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

fn config_help() -> String {
    let mut s = String::from("Config keys [default]:\n");
    for (key, text) in KEYS {
        s.push_str(&format!("  {key:<16} {text}\n"));
    }
    s.push_str("\nExit status: 0 on success, 1 on a failed check or run, 2 on a config error.");
    s
}

fn run(config: &Path, out_dir: &Path, parallel: Option<usize>, plot: bool, traces: bool) -> ExitCode {
    let mut cfg = match ExperimentConfig::from_file(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(p) = parallel {
        cfg.parallelism = p;
        if let Err(e) = cfg.validate() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let res = match run_sweep(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CHECK_FAILED);
        }
    };
    let written = emit_csv(&res, out_dir)
        .and_then(|_| emit_json(&res, out_dir))
        .and_then(|_| if plot { emit_svg_plot(&res, &out_dir.join(PLOT_FILE)) } else { Ok(()) })
        .and_then(|_| if traces { emit_traces(&res, out_dir).map(|_| ()) } else { Ok(()) });
    if let Err(e) = written {
        eprintln!("error: cannot write to {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_CHECK_FAILED);
    }
    for a in &res.aggregates {
        println!(
            "d={} eps={} mean_regret={:.3} ci95=±{:.3} reps={}",
            a.dim, a.epsilon, a.mean_regret, a.ci95_halfwidth, a.repetitions
        );
    }
    println!("wrote {}", out_dir.display());
    ExitCode::SUCCESS
}

fn verify(name: &str) -> ExitCode {
    let Some(suite) = Suite::parse(name) else {
        eprintln!("error: unknown suite `{name}` (expected fast, desk or all)");
        return ExitCode::from(EXIT_CONFIG);
    };
    let outcomes = run_suite(suite);
    for o in &outcomes {
        println!("{o}");
    }
    if outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(config_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match cli.command {
        Command::Run { config, out_dir, parallel, plot, traces } => run(&config, &out_dir, parallel, plot, traces),
        Command::Verify { suite } => verify(&suite),
    }
}
