//! Experiment grids, CSV artifacts and reports behind the command line.
//!
//! Output layout of a run directory:
//!
//! * `manifest.toml`: the resolved scenario; running it again reproduces the
//!   metric files byte for byte.
//! * `cells/`: one CSV per grid cell, written by the worker that ran it.
//! * `per_day.csv`, `summary.csv` or `repeat_day.csv`: merged in grid order
//!   once every cell has finished.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::env::DayMetrics;
use crate::error::{Error, Result};
use crate::gpi::{
    oracle_values, prepare_source, repeat_single_day, run_seed, Buffer, PolicyKind, SourceValue,
};
use crate::scenario::{PairsConfig, Scenario, ScenarioConfig};
use crate::transfer::{
    concordance_rate_report, default_pair_set, ConcordanceReport, ConcordanceSpec,
};
use crate::valuation::ValueTable;

pub const PER_DAY_HEADER: &str =
    "scenario,policy,seed,gamma,lambda,day,reward,answer_rate,completion_rate";
pub const SUMMARY_HEADER: &str = "scenario,policy,gamma,lambda,day,seeds,reward_mean,reward_stderr,answer_rate_mean,answer_rate_stderr,completion_rate_mean,completion_rate_stderr";
pub const REPEAT_HEADER: &str = "scenario,policy,seed,gamma,lambda,iteration,reward,delta";

/// One `(policy, gamma, lambda, seed)` combination. `lambda` is only set for
/// policies that take it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub policy: PolicyKind,
    pub gamma: f64,
    pub lambda: Option<f64>,
    pub seed: u64,
}

impl GridCell {
    fn file_name(&self, prefix: &str) -> String {
        let lambda = self
            .lambda
            .map_or_else(|| "-".to_string(), |l| l.to_string());
        format!(
            "{prefix}_{}_g{}_l{}_s{}.csv",
            self.policy, self.gamma, lambda, self.seed
        )
    }

    fn lambda_field(&self) -> String {
        self.lambda.map_or_else(String::new, |l| l.to_string())
    }
}

/// Grid cells in output order: policy, gamma, lambda, seed.
pub fn grid_cells(config: &ScenarioConfig) -> Vec<GridCell> {
    let e = &config.experiment;
    let mut cells = Vec::new();
    for &policy in &e.policies {
        for &gamma in &e.gammas {
            let lambdas: Vec<Option<f64>> = if policy.uses_lambda() {
                config
                    .experiment
                    .lambdas
                    .iter()
                    .copied()
                    .map(Some)
                    .collect()
            } else {
                vec![None]
            };
            for lambda in lambdas {
                for &seed in &e.seeds {
                    cells.push(GridCell {
                        policy,
                        gamma,
                        lambda,
                        seed,
                    });
                }
            }
        }
    }
    cells
}

fn pool(parallel: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes `manifest.toml` and returns its contents.
pub fn write_manifest(config: &ScenarioConfig, out: &Path) -> Result<String> {
    let text = config.to_toml();
    write_text(&out.join("manifest.toml"), &text)?;
    Ok(text)
}

/// Source logs and values per discount, in `gammas` order.
fn sources(
    scenario: &Scenario,
    gammas: &[f64],
    pool: &rayon::ThreadPool,
) -> Result<Vec<(Buffer, SourceValue)>> {
    pool.install(|| {
        gammas
            .par_iter()
            .map(|&g| prepare_source(scenario, g))
            .collect()
    })
}

fn source_for<'a>(
    gammas: &[f64],
    sources: &'a [(Buffer, SourceValue)],
    gamma: f64,
) -> &'a (Buffer, SourceValue) {
    let i = gammas
        .iter()
        .position(|g| *g == gamma)
        .expect("cell gammas come from the config");
    &sources[i]
}

/// One per-day CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct DayRow {
    pub policy: PolicyKind,
    pub seed: u64,
    pub gamma: f64,
    pub lambda: Option<f64>,
    /// From 1.
    pub day: usize,
    pub metrics: DayMetrics,
}

fn day_rows_csv(scenario: &str, rows: &[DayRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let lambda = r.lambda.map_or_else(String::new, |l| l.to_string());
        writeln!(
            s,
            "{scenario},{},{},{},{lambda},{},{},{},{}",
            r.policy,
            r.seed,
            r.gamma,
            r.day,
            r.metrics.reward,
            r.metrics.answer_rate(),
            r.metrics.completion_rate()
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub out: PathBuf,
    pub rows: Vec<DayRow>,
}

/// Runs the full grid of `config` into `out`.
///
/// Cells run on `parallel` workers and each writes its own file under
/// `cells/`. The merged files are written only when every cell succeeded;
/// otherwise the finished cell files stay in place and the first error is
/// returned.
pub fn simulate(config: &ScenarioConfig, out: &Path, parallel: usize) -> Result<SimulateReport> {
    let scenario = Scenario::build(config.clone())?;
    write_manifest(config, out)?;
    let name = scenario.name().to_string();
    let days = config.experiment.days;
    let cells = grid_cells(config);
    let pool = pool(parallel)?;
    let gammas = &config.experiment.gammas;
    let srcs = if days == 0 {
        Vec::new()
    } else {
        sources(&scenario, gammas, &pool)?
    };
    let cell_dir = out.join("cells");
    fs::create_dir_all(&cell_dir)?;

    let results: Vec<Result<Vec<DayRow>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let series = if days == 0 {
                    Vec::new()
                } else {
                    let source = source_for(gammas, &srcs, cell.gamma);
                    let lambda = cell.lambda.unwrap_or(0.0);
                    run_seed(
                        &scenario,
                        source,
                        cell.policy,
                        days,
                        cell.gamma,
                        lambda,
                        cell.seed,
                    )?
                };
                let rows: Vec<DayRow> = series
                    .into_iter()
                    .enumerate()
                    .map(|(d, metrics)| DayRow {
                        policy: cell.policy,
                        seed: cell.seed,
                        gamma: cell.gamma,
                        lambda: cell.lambda,
                        day: d + 1,
                        metrics,
                    })
                    .collect();
                let text = format!("{PER_DAY_HEADER}\n{}", day_rows_csv(&name, &rows));
                write_text(&cell_dir.join(cell.file_name("day")), &text)?;
                Ok(rows)
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    write_text(
        &out.join("per_day.csv"),
        &format!("{PER_DAY_HEADER}\n{}", day_rows_csv(&name, &rows)),
    )?;
    write_text(&out.join("summary.csv"), &summary_csv(&name, &rows))?;
    Ok(SimulateReport {
        out: out.to_path_buf(),
        rows,
    })
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

type GroupKey = (PolicyKind, f64, Option<f64>, usize);

/// Mean and standard error across seeds for every (policy, gamma, lambda,
/// day), in first-appearance order of the rows.
pub fn summary_csv(scenario: &str, rows: &[DayRow]) -> String {
    let mut groups: Vec<(GroupKey, Vec<&DayRow>)> = Vec::new();
    for r in rows {
        let key = (r.policy, r.gamma, r.lambda, r.day);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut s = format!("{SUMMARY_HEADER}\n");
    for ((policy, gamma, lambda, day), g) in groups {
        let col = |f: fn(&DayMetrics) -> f64| {
            mean_stderr(&g.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>())
        };
        let (rm, rs) = col(|m| m.reward);
        let (am, as_) = col(|m| m.answer_rate());
        let (cm, cs) = col(|m| m.completion_rate());
        let lambda = lambda.map_or_else(String::new, |l| l.to_string());
        writeln!(
            s,
            "{scenario},{policy},{gamma},{lambda},{day},{},{rm},{rs},{am},{as_},{cm},{cs}",
            g.len()
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatRow {
    pub cell: GridCell,
    pub iteration: usize,
    pub reward: f64,
    pub delta: f64,
}

/// Repeated single-day runs for every grid cell, `experiment.repetitions`
/// passes each.
pub fn repeat_day(config: &ScenarioConfig, out: &Path, parallel: usize) -> Result<Vec<RepeatRow>> {
    let scenario = Scenario::build(config.clone())?;
    write_manifest(config, out)?;
    let name = scenario.name().to_string();
    let cells = grid_cells(config);
    let pool = pool(parallel)?;
    let gammas = &config.experiment.gammas;
    let srcs = sources(&scenario, gammas, &pool)?;
    let cell_dir = out.join("cells");
    fs::create_dir_all(&cell_dir)?;
    let render = |rows: &[RepeatRow]| {
        let mut s = String::new();
        for r in rows {
            writeln!(
                s,
                "{name},{},{},{},{},{},{},{}",
                r.cell.policy,
                r.cell.seed,
                r.cell.gamma,
                r.cell.lambda_field(),
                r.iteration,
                r.reward,
                r.delta
            )
            .unwrap();
        }
        s
    };
    let results: Vec<Result<Vec<RepeatRow>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let source = source_for(gammas, &srcs, cell.gamma);
                let lambda = cell.lambda.unwrap_or(0.0);
                let iters = repeat_single_day(
                    &scenario,
                    source,
                    cell.policy,
                    config.experiment.repetitions,
                    cell.gamma,
                    lambda,
                    cell.seed,
                )?;
                let rows: Vec<RepeatRow> = iters
                    .into_iter()
                    .map(|it| RepeatRow {
                        cell: *cell,
                        iteration: it.iteration,
                        reward: it.reward,
                        delta: it.delta,
                    })
                    .collect();
                write_text(
                    &cell_dir.join(cell.file_name("repeat")),
                    &format!("{REPEAT_HEADER}\n{}", render(&rows)),
                )?;
                Ok(rows)
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    write_text(
        &out.join("repeat_day.csv"),
        &format!("{REPEAT_HEADER}\n{}", render(&rows)),
    )?;
    Ok(rows)
}

/// First iteration whose reward reaches `fraction` of the last iteration's.
pub fn iterations_to_fraction(rewards: &[f64], fraction: f64) -> Option<usize> {
    let last = *rewards.last()?;
    rewards
        .iter()
        .position(|r| *r >= fraction * last)
        .map(|i| i + 1)
}

/// Reads a table written by [`write_table`]: CSV when the extension is
/// `csv`, the binary format otherwise.
pub fn read_table(path: &Path, gamma: f64) -> Result<ValueTable> {
    let file = fs::File::open(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let reader = std::io::BufReader::new(file);
    let parsed = if path.extension().is_some_and(|e| e == "csv") {
        ValueTable::read_csv(reader, gamma)
    } else {
        ValueTable::read_binary(reader)
    };
    parsed.map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_table(table: &ValueTable, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let file = std::io::BufWriter::new(fs::File::create(path)?);
    if path.extension().is_some_and(|e| e == "csv") {
        table.write_csv(file)
    } else {
        table.write_binary(file)
    }
}

/// Concordance pairs of `config` for comparing against `source`.
pub fn pair_spec(config: &ScenarioConfig, source: &ValueTable) -> Result<ConcordanceSpec> {
    let pairs = match &config.transfer.pairs {
        PairsConfig::Auto { q } => default_pair_set(source, *q)?,
        PairsConfig::Explicit { list } => list.iter().map(|[a, b]| (*a, *b)).collect(),
    };
    ConcordanceSpec::new(pairs, 0.0, config.transfer.margin)
}

pub fn concordance(
    config: &ScenarioConfig,
    source: &ValueTable,
    target: &ValueTable,
) -> Result<ConcordanceReport> {
    let spec = pair_spec(config, source)?;
    concordance_rate_report(source, target, &spec)
}

pub fn concordance_csv(report: &ConcordanceReport) -> String {
    let mut s = String::from("t,rate\n");
    for (t, r) in report.per_time.iter().enumerate() {
        writeln!(s, "{t},{r}").unwrap();
    }
    writeln!(s, "all,{}", report.aggregate).unwrap();
    s
}

/// Reference tables of both environments under myopic dispatch, from `days`
/// logged days each.
pub fn oracle_tables(
    scenario: &Scenario,
    gamma: f64,
    days: usize,
    seed: u64,
) -> Result<(ValueTable, ValueTable)> {
    let (src, tgt) = rayon::join(
        || oracle_values(scenario, &scenario.source, gamma, days, seed),
        || oracle_values(scenario, &scenario.target, gamma, days, seed),
    );
    Ok((src?, tgt?))
}

/// Human-readable description of a validated scenario.
pub fn describe(scenario: &Scenario) -> String {
    let c = &scenario.config;
    let e = &c.experiment;
    let mut s = String::new();
    writeln!(s, "scenario {}", scenario.name()).unwrap();
    writeln!(
        s,
        "  cells {}, horizon {}",
        scenario.world.n_cells(),
        scenario.world.horizon()
    )
    .unwrap();
    for (label, m) in [("source", &scenario.source), ("target", &scenario.target)] {
        writeln!(
            s,
            "  {label}: {:.1} expected orders/day, {} drivers",
            m.expected_orders_per_day(),
            m.initial_drivers().iter().sum::<u32>()
        )
        .unwrap();
    }
    writeln!(
        s,
        "  grid: {} policies x {} gammas x {} seeds, {} days, {} cells",
        e.policies.len(),
        e.gammas.len(),
        e.seeds.len(),
        e.days,
        grid_cells(c).len()
    )
    .unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_stderr_matches_hand_values() {
        assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn iterations_to_fraction_examples() {
        assert_eq!(iterations_to_fraction(&[5.0], 0.95), Some(1));
        assert_eq!(iterations_to_fraction(&[1.0, 9.0, 10.0], 0.95), Some(3));
        assert_eq!(iterations_to_fraction(&[1.0, 9.6, 10.0], 0.95), Some(2));
        assert_eq!(iterations_to_fraction(&[], 0.95), None);
    }
}
