use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cogrelay::experiment::{
    compare_analytic_sim, load_spec, run_sweep, write_csv, ExperimentSpec, Method,
};
use cogrelay::Strategy;

const EXIT_VALIDATION: u8 = 1;
const EXIT_COMPARISON: u8 = 2;

#[derive(Parser)]
#[command(name = "cogrelay", version, about = "Cognitive relaying: closed-form rates, simulation and QoS optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form rates and delays at the spec's fixed parameters.
    Analyze(Common),
    /// Analytic and simulated rows for every sweep point.
    Simulate(Common),
    /// Check simulated estimates against the closed forms.
    Compare(Common),
    /// Maximize the secondary service rate under the QoS targets.
    Optimize(Common),
    /// Smallest relay count meeting the QoS targets.
    MinRelays(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment spec file.
    #[arg(long)]
    spec: PathBuf,
    /// Output file; defaults to the spec's `output` key, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Restrict to one strategy.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

impl Common {
    fn load(&self) -> Result<ExperimentSpec, String> {
        let mut spec = load_spec(&self.spec).map_err(|e| e.to_string())?;
        if let Some(seed) = self.seed {
            spec.set_seed(seed);
        }
        if let Some(slots) = self.slots {
            if slots == 0 {
                return Err("--slots must be positive".into());
            }
            spec.sim.slots = slots;
        }
        if let Some(r) = self.replications {
            if r == 0 {
                return Err("--replications must be positive".into());
            }
            spec.sim.replications = r;
        }
        if let Some(s) = self.strategy {
            spec.strategies = vec![s];
        }
        Ok(spec)
    }

    fn writer(&self, spec: &ExperimentSpec) -> io::Result<Box<dyn Write>> {
        Ok(match self.out.as_ref().or(spec.output.as_ref()) {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let (common, methods): (&Common, &[Method]) = match &cli.command {
        Command::Analyze(c) => (c, &[Method::Analytic]),
        Command::Simulate(c) => (c, &[Method::Analytic, Method::Simulated]),
        Command::Optimize(c) => (c, &[Method::Optimized]),
        Command::MinRelays(c) => (c, &[Method::MinRelays]),
        Command::Compare(c) => {
            let spec = c.load()?;
            let report = compare_analytic_sim(&spec)?;
            let mut w = c.writer(&spec).map_err(|e| e.to_string())?;
            writeln!(w, "{report}").and_then(|_| w.flush()).map_err(|e| e.to_string())?;
            return Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_COMPARISON)
            });
        }
    };
    let spec = common.load()?;
    let rows = run_sweep(&spec, methods);
    let w = common.writer(&spec).map_err(|e| e.to_string())?;
    write_csv(w, &rows).map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
