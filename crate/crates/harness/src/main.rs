use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use safe_oco::commands::{cmd_inspect, cmd_plot, cmd_run, cmd_verify, resolve_spec, GlobalOptions};
use safe_oco::lemmas::DEFAULT_NESTING_SAMPLES;

/// Safe online convex optimization under unknown linear constraints.
#[derive(Parser, Debug)]
#[command(name = "safe-oco", version)]
struct Cli {
    /// Master seed; run k uses seed + k.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    /// Also render SVG charts.
    #[arg(long, global = true)]
    svg: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Run-config file (TOML with dotted keys).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set run.horizon=10000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a seeded experiment and write traces, aggregates and a summary.
    Run(ConfigArgs),
    /// Check exploration safety, coverage, the eigenvalue bound and set nesting.
    Verify {
        #[command(flatten)]
        config: ConfigArgs,
        /// Uniform samples per seed for the nesting check (0 skips it).
        #[arg(long, default_value_t = DEFAULT_NESTING_SAMPLES)]
        samples: u64,
    },
    /// Aggregate trace files into plot CSVs (and SVGs with --svg).
    Plot {
        /// Directory holding trace_seed*.csv files.
        #[arg(long)]
        input: PathBuf,
    },
    /// Dump the constraint estimate and its diagnostics for one seed.
    Inspect {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = execute(
        std::env::args_os(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    ExitCode::from(code)
}

/// Parses `args` and runs the command, returning the process exit status:
/// 0 on success, 1 when a run aborted or a safety check failed, 2 on errors.
fn execute<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = write!(stderr, "{}", e.render());
            return 2;
        }
        Err(e) => {
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
    };
    let opts = GlobalOptions {
        seed: cli.seed,
        out: cli.out,
        force: cli.force,
        svg: cli.svg,
        threads: cli.threads,
    };
    match dispatch(cli.command, &opts, stdout) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            2
        }
    }
}

fn dispatch(command: Command, opts: &GlobalOptions, out: &mut dyn Write) -> anyhow::Result<bool> {
    match command {
        Command::Run(c) => {
            let spec = resolve_spec(c.config.as_deref(), &c.overrides, opts)?;
            let outcome = cmd_run(&spec, opts)?;
            writeln!(out, "{}: {}", spec.name, outcome.summary_line())?;
            writeln!(
                out,
                "wrote {} files to {}",
                outcome.files.len(),
                spec.output_dir.display()
            )?;
            Ok(outcome.success())
        }
        Command::Verify { config, samples } => {
            let spec = resolve_spec(config.config.as_deref(), &config.overrides, opts)?;
            let v = cmd_verify(&spec, samples, opts)?;
            write!(out, "{}", v.report)?;
            writeln!(out, "wrote {}", v.file.display())?;
            Ok(v.safe)
        }
        Command::Plot { input } => {
            for f in cmd_plot(&input, opts)? {
                writeln!(out, "wrote {}", f.display())?;
            }
            Ok(true)
        }
        Command::Inspect { config, samples } => {
            let spec = resolve_spec(config.config.as_deref(), &config.overrides, opts)?;
            let (text, path) = cmd_inspect(&spec, spec.master_seed, samples, opts)?;
            write!(out, "{text}")?;
            writeln!(out, "wrote {}", path.display())?;
            Ok(true)
        }
    }
}
