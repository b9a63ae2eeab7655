use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vtransfer::gpi::PolicyKind;
use vtransfer::harness;
use vtransfer::scenario::{Scenario, ScenarioConfig};
use vtransfer::{Error, Result};

#[derive(Parser)]
#[command(
    name = "vtransfer",
    version,
    about = "Value-based order dispatch experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the policy x gamma x lambda x seed grid over consecutive target days.
    Simulate(RunArgs),
    /// Replay one target day several times, refitting the value table after each pass.
    RepeatDay(RunArgs),
    /// Concordance rate between two value tables over the configured pair set.
    Concordance {
        #[arg(long)]
        config: PathBuf,
        /// Source table (`.csv` or binary).
        #[arg(long)]
        source: PathBuf,
        /// Target table (`.csv` or binary).
        #[arg(long)]
        target: PathBuf,
        /// Discount recorded with CSV tables.
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        /// Also write the per-time-slice report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reference value tables of the source and target environments under myopic dispatch.
    OracleValues {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 20)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parse and check a scenario file without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `<output root>/<scenario name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output root used when `--out` is absent.
    #[arg(long, env = "VTRANSFER_OUT", default_value = "results")]
    out_root: PathBuf,
    /// Seeds to run instead of the configured ones, e.g. `1,2,5-9`.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Restrict to these policies (repeatable).
    #[arg(long = "policy")]
    policies: Vec<PolicyKind>,
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || {
        Error::config(
            "--seeds",
            format!("expected a list like 1,2,5-9, got {text:?}"),
        )
    };
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                );
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

impl RunArgs {
    /// Config with command-line overrides applied, and the output directory.
    fn resolve(&self) -> Result<(ScenarioConfig, PathBuf)> {
        let mut config = ScenarioConfig::load(&self.config)?;
        if let Some(seeds) = &self.seeds {
            config.experiment.seeds = parse_seeds(seeds)?;
        }
        if !self.policies.is_empty() {
            config
                .experiment
                .policies
                .retain(|p| self.policies.contains(p));
            if config.experiment.policies.is_empty() {
                return Err(Error::config(
                    "--policy",
                    "no configured policy matches the filter",
                ));
            }
        }
        if self.parallel == 0 {
            return Err(Error::config("--parallel", "must be at least 1"));
        }
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| self.out_root.join(&config.name));
        Ok((config, out))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let (config, out) = args.resolve()?;
            let report = harness::simulate(&config, &out, args.parallel)?;
            println!(
                "{} rows written to {}",
                report.rows.len(),
                out.join("per_day.csv").display()
            );
        }
        Command::RepeatDay(args) => {
            let (config, out) = args.resolve()?;
            let rows = harness::repeat_day(&config, &out, args.parallel)?;
            println!(
                "{} rows written to {}",
                rows.len(),
                out.join("repeat_day.csv").display()
            );
        }
        Command::Concordance {
            config,
            source,
            target,
            gamma,
            out,
        } => {
            let config = ScenarioConfig::load(&config)?;
            let source = harness::read_table(&source, gamma)?;
            let target = harness::read_table(&target, gamma)?;
            let report = harness::concordance(&config, &source, &target)?;
            if let Some(out) = out {
                write(&out, &harness::concordance_csv(&report))?;
            }
            println!("concordance rate {}", report.aggregate);
        }
        Command::OracleValues {
            config,
            out,
            gamma,
            days,
            seed,
        } => {
            let scenario = Scenario::load(&config)?;
            let out = out.unwrap_or_else(|| {
                PathBuf::from("results")
                    .join(scenario.name())
                    .join("oracle")
            });
            let (src, tgt) = harness::oracle_tables(&scenario, gamma, days, seed)?;
            harness::write_table(&src, &out.join("source.csv"))?;
            harness::write_table(&tgt, &out.join("target.csv"))?;
            let report = harness::concordance(&scenario.config, &src, &tgt)?;
            println!(
                "tables written to {}; concordance rate {}",
                out.display(),
                report.aggregate
            );
        }
        Command::ValidateConfig { config } => {
            let scenario = Scenario::load(&config)?;
            print!("{}", harness::describe(&scenario));
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
