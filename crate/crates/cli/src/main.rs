use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cotrans::{check, run_scenario, sweep, CliError, RunOptions, SweepParam};

/// Simulate and certify cooperative object transport scenarios.
#[derive(Debug, Parser)]
#[command(name = "cotrans", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a scenario and write CSV data, SVG plots and report.json.
    Run {
        scenario: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the scenario once per value of one parameter.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated list, e.g. `0.1,1.0`.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(short, long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Validate a scenario and certify its gains without integrating.
    Check { scenario: PathBuf },
}

fn execute(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Run {
            scenario,
            out,
            dt,
            t_end,
            seed,
        } => {
            let outcome = run_scenario(&scenario, &out, &RunOptions { dt, t_end, seed })?;
            let r = &outcome.report;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            let _ = writeln!(
                std::io::stdout().lock(),
                "{}: {} steps, tail-mean |v_o - v_c| = {:?}, outputs in {}",
                scenario.display(),
                r.steps_logged,
                r.metrics.vel_error.tail_mean,
                out.display()
            );
            if let Some(msg) = &r.failure {
                eprintln!("error: run stopped early: {msg}");
                return Ok(2);
            }
            Ok(0)
        }
        Command::Sweep {
            scenario,
            param,
            values,
            out,
        } => {
            let values: Vec<String> = values.split(',').map(String::from).collect();
            let rows = sweep(&scenario, param, &values, &out)?;
            let failed = rows.iter().filter(|r| !r.succeeded()).count();
            let _ = writeln!(
                std::io::stdout().lock(),
                "{} runs over {}, summary in {}",
                rows.len(),
                param.name(),
                out.join("summary.csv").display()
            );
            if failed > 0 {
                eprintln!("error: {failed} of {} runs failed", rows.len());
                return Ok(2);
            }
            Ok(0)
        }
        Command::Check { scenario } => {
            let report = check(&scenario)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let _ = writeln!(std::io::stdout().lock(), "{json}");
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COTRANS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
