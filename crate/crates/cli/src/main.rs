use bendlift::sim::Method;
use bendlift_cli::commands::{self, RunRequest, ValidateRequest};
use bendlift_cli::{exit, output, CliError};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bendlift",
    version,
    about = "Simulate two vehicles carrying a bendable strip"
)]
struct Cli {
    /// Worker threads for running methods in parallel (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario batch and write logs, summaries and a manifest.
    Run(RunArgs),
    /// Tabulate per-trial errors across report directories.
    Compare(CompareArgs),
    /// Run the validation-mode property suite.
    Validate(ValidateArgs),
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| {
        let known: Vec<&str> = Method::ALL.iter().map(Method::label).collect();
        format!("unknown method `{s}` (expected one of {})", known.join(", "))
    })
}

#[derive(Args)]
struct RunArgs {
    /// Config file, or a preset name: exp1, exp2, exp3.
    config: String,
    /// Method to run; repeat for several. Default: the config's list.
    #[arg(long = "method", value_parser = parse_method)]
    methods: Vec<Method>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config value, e.g. `--set gains.adaptive.k_d=0.8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory. Default: `<out-root>/<config name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "BENDLIFT_OUT", default_value = "runs")]
    out_root: PathBuf,
    /// Suppress per-trial progress lines.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Report directories written by `run`.
    #[arg(required = true, num_args = 2..)]
    dirs: Vec<PathBuf>,
    /// Divide every trial mean by this method's mean for the same trial.
    #[arg(long, value_parser = parse_method)]
    baseline: Option<Method>,
    /// Long-format CSV output. Default: `<out-root>/comparison.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "BENDLIFT_OUT", default_value = "runs")]
    out_root: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Config file or preset supplying mass, gains and estimator settings.
    config: Option<String>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Derivative gain of the adaptive law [N·s/m].
    #[arg(long)]
    kd: Option<f64>,
    /// Forgetting factor [1/s].
    #[arg(long)]
    lambda: Option<f64>,
    /// Polynomial order of the features.
    #[arg(long)]
    order: Option<usize>,
    /// Print the results as JSON instead of text.
    #[arg(long)]
    json: bool,
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let mut overrides = bendlift_cli::config::flag_overrides(&args.methods, args.trials, args.seed);
    overrides.extend(args.overrides);
    let outcome = commands::run(&RunRequest {
        config: args.config,
        overrides,
        out_dir: args.out,
        out_root: args.out_root,
        progress: !args.quiet,
    })?;
    print!("{}", commands::format_summary(&outcome.summary));
    println!("reports written to {}", outcome.dir.display());
    let failures = outcome.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::TaskFailure(failures.join("; ")))
    }
}

fn compare(args: CompareArgs) -> Result<(), CliError> {
    let rows = commands::compare(&args.dirs, args.baseline)?;
    print!("{}", commands::format_comparison(&rows));
    let path = args.out.unwrap_or_else(|| args.out_root.join("comparison.csv"));
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    output::write_atomic(&path, &output::comparison_csv(&rows))?;
    println!("comparison written to {}", path.display());
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let results = commands::validate(&ValidateRequest {
        config: args.config,
        overrides: args.overrides,
        k_d: args.kd,
        lambda: args.lambda,
        order: args.order,
    })?;
    if args.json {
        let text = serde_json::to_string_pretty(&results).map_err(|e| CliError::io("stdout", e.into()))?;
        println!("{text}");
    } else {
        for r in &results {
            println!("{r}");
        }
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| r.verdict.is_failure())
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::PropertyFailure(failed.join(", ")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot set up {jobs} worker threads: {e}");
            return ExitCode::from(exit::USAGE);
        }
    }
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::from(exit::SUCCESS),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
