//! Day-by-day generalized policy iteration and the compared policies.
//!
//! Each target day: evaluate a value table from the data gathered so far,
//! dispatch the whole day greedily against it, and append the day's tuples
//! to the buffer. Demand for `(seed, day)` comes from its own generator, so
//! every policy faces the same orders under a shared seed.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dispatch::{advantage_transform, build_problem, km_match};
use crate::env::{
    run_day, DayMetrics, DemandModel, DispatchPolicy, DriverSlot, GridWorld, OrderRequest,
    TransitionTuple,
};
use crate::error::{Error, Result};
use crate::scenario::{PairsConfig, Scenario, SourceLogging};
use crate::transfer::{default_pair_set, transfer_evaluate, ConcordanceSpec, OptimizerSettings};
use crate::valuation::{dp_evaluate, IndexedBuffer, ValueTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Immediate reward only.
    Greedy,
    /// Value of the source period, never updated.
    SourceOnly,
    /// Learned from target days only, starting from zero.
    TargetOnly,
    /// Learned from source and target days pooled together.
    NaivelyCombine,
    /// Learned from target days with the concordance penalty against the
    /// source value.
    PatternTransfer,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Greedy,
        PolicyKind::SourceOnly,
        PolicyKind::TargetOnly,
        PolicyKind::NaivelyCombine,
        PolicyKind::PatternTransfer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Greedy => "greedy",
            PolicyKind::SourceOnly => "source-only",
            PolicyKind::TargetOnly => "target-only",
            PolicyKind::NaivelyCombine => "naively-combine",
            PolicyKind::PatternTransfer => "pattern-transfer",
        }
    }

    pub fn needs_source(self) -> bool {
        matches!(
            self,
            PolicyKind::SourceOnly | PolicyKind::NaivelyCombine | PolicyKind::PatternTransfer
        )
    }

    /// Whether the penalty weight is a parameter of this policy.
    pub fn uses_lambda(self) -> bool {
        self == PolicyKind::PatternTransfer
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown policy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvTag {
    Source,
    Target,
}

/// Append-only log of days, each tagged with the environment it came from.
#[derive(Debug, Clone)]
pub struct Buffer {
    horizon: usize,
    n_cells: usize,
    days: Vec<(EnvTag, Vec<TransitionTuple>)>,
}

impl Buffer {
    pub fn new(horizon: usize, n_cells: usize) -> Self {
        Self {
            horizon,
            n_cells,
            days: Vec::new(),
        }
    }

    pub fn push_day(&mut self, tag: EnvTag, tuples: Vec<TransitionTuple>) -> Result<()> {
        if let Some(bad) = tuples.iter().find(|x| x.start.t >= x.finish.t) {
            return Err(Error::domain(format!(
                "tuple starting at t={} does not move forward in time",
                bad.start.t
            )));
        }
        self.days.push((tag, tuples));
        Ok(())
    }

    pub fn days(&self) -> &[(EnvTag, Vec<TransitionTuple>)] {
        &self.days
    }

    pub fn n_days(&self, tag: EnvTag) -> usize {
        self.days.iter().filter(|(t, _)| *t == tag).count()
    }

    /// Tuples of the selected environments, in day order.
    pub fn indexed(&self, tags: &[EnvTag]) -> Result<IndexedBuffer> {
        let tuples = self
            .days
            .iter()
            .filter(|(t, _)| tags.contains(t))
            .flat_map(|(_, d)| d.iter().copied())
            .collect();
        IndexedBuffer::new(tuples, self.horizon, self.n_cells)
    }
}

/// The source-period value table and the concordance pairs derived from it.
#[derive(Debug, Clone)]
pub struct SourceValue {
    pub table: ValueTable,
    pub pairs: Vec<(usize, usize)>,
}

impl SourceValue {
    pub fn spec(&self, lambda: f64, margin: f64) -> Result<ConcordanceSpec> {
        ConcordanceSpec::new(self.pairs.iter().copied(), lambda, margin)
    }
}

/// Value table a policy dispatches against, given everything logged so far.
///
/// `init` warm-starts the evaluation; states without data keep its values.
pub fn evaluate_policy_value(
    kind: PolicyKind,
    buffer: &Buffer,
    v_src: Option<&ValueTable>,
    spec: Option<&ConcordanceSpec>,
    gamma: f64,
    opt: &OptimizerSettings,
    init: Option<&ValueTable>,
) -> Result<ValueTable> {
    let missing = |what: &str| Error::MissingInput {
        policy: kind.to_string(),
        what: what.to_string(),
    };
    match kind {
        PolicyKind::Greedy => Ok(ValueTable::zeros(buffer.horizon, buffer.n_cells, gamma)),
        PolicyKind::SourceOnly => {
            if buffer.n_days(EnvTag::Source) == 0 {
                return Err(missing("source days"));
            }
            dp_evaluate(&buffer.indexed(&[EnvTag::Source])?, gamma, None)
        }
        PolicyKind::TargetOnly => dp_evaluate(&buffer.indexed(&[EnvTag::Target])?, gamma, init),
        PolicyKind::NaivelyCombine => {
            if buffer.n_days(EnvTag::Source) == 0 {
                return Err(missing("source days"));
            }
            dp_evaluate(
                &buffer.indexed(&[EnvTag::Source, EnvTag::Target])?,
                gamma,
                init,
            )
        }
        PolicyKind::PatternTransfer => {
            let v_src = v_src.ok_or_else(|| missing("source value table"))?;
            let spec = spec.ok_or_else(|| missing("concordance spec"))?;
            transfer_evaluate(
                &buffer.indexed(&[EnvTag::Target])?,
                v_src,
                spec,
                gamma,
                opt,
                init,
            )
        }
    }
}

/// Matches each window by maximising summed Q-values under a value table.
pub struct ValueDispatch<'a> {
    pub table: &'a ValueTable,
    pub world: &'a GridWorld,
    pub gamma: f64,
    pub radius: u32,
}

impl DispatchPolicy for ValueDispatch<'_> {
    fn assign(
        &mut self,
        _t: usize,
        drivers: &[DriverSlot],
        orders: &[OrderRequest],
    ) -> Result<Vec<Option<usize>>> {
        let problem = build_problem(
            drivers,
            orders,
            self.table,
            self.world,
            self.gamma,
            self.radius,
        );
        Ok(km_match(&advantage_transform(&problem)).assignment)
    }
}

const SOURCE_STREAM: u64 = 0x736f_7572_6365;
const TARGET_STREAM: u64 = 0x7461_7267_6574;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generator for one day's demand. Depends only on `(seed, stream, day)`.
pub fn day_rng(seed: u64, stream: u64, day: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ stream) ^ day as u64))
}

fn simulate(
    world: &GridWorld,
    model: &DemandModel,
    table: &ValueTable,
    gamma: f64,
    radius: u32,
    rng: &mut ChaCha8Rng,
) -> Result<crate::env::DayOutcome> {
    let mut policy = ValueDispatch {
        table,
        world,
        gamma,
        radius,
    };
    run_day(world, model, &mut policy, gamma, rng)
}

/// Logs the configured source period and evaluates its value table.
pub fn prepare_source(scenario: &Scenario, gamma: f64) -> Result<(Buffer, SourceValue)> {
    let cfg = &scenario.config;
    let world = &scenario.world;
    let mut buffer = Buffer::new(world.horizon(), world.n_cells());
    let mut table = ValueTable::zeros(world.horizon(), world.n_cells(), gamma);
    for day in 0..cfg.source_data.days {
        if cfg.source_data.logging == SourceLogging::Gpi && day > 0 {
            table = dp_evaluate(&buffer.indexed(&[EnvTag::Source])?, gamma, Some(&table))?;
        }
        let mut rng = day_rng(cfg.source_data.seed, SOURCE_STREAM, day);
        let out = simulate(
            world,
            &scenario.source,
            &table,
            gamma,
            cfg.dispatch.radius,
            &mut rng,
        )?;
        buffer.push_day(EnvTag::Source, out.tuples)?;
    }
    let table = dp_evaluate(&buffer.indexed(&[EnvTag::Source])?, gamma, None)?;
    let pairs = match &cfg.transfer.pairs {
        PairsConfig::Auto { q } => default_pair_set(&table, *q)?,
        PairsConfig::Explicit { list } => list.iter().map(|[a, b]| (*a, *b)).collect(),
    };
    Ok((buffer, SourceValue { table, pairs }))
}

/// Metrics of one seed's run, one entry per target day.
pub fn run_seed(
    scenario: &Scenario,
    source: &(Buffer, SourceValue),
    kind: PolicyKind,
    days: usize,
    gamma: f64,
    lambda: f64,
    seed: u64,
) -> Result<Vec<DayMetrics>> {
    let cfg = &scenario.config;
    let world = &scenario.world;
    let (source_buffer, v_src) = source;
    let spec = v_src.spec(lambda, cfg.transfer.margin)?;
    let mut buffer = if kind.needs_source() {
        source_buffer.clone()
    } else {
        Buffer::new(world.horizon(), world.n_cells())
    };
    let opt = &cfg.transfer.optimizer;
    let mut table: Option<ValueTable> = None;
    let mut series = Vec::with_capacity(days);
    for day in 0..days {
        let next = match (kind, &table) {
            (PolicyKind::Greedy | PolicyKind::SourceOnly, Some(frozen)) => frozen.clone(),
            _ => evaluate_policy_value(
                kind,
                &buffer,
                Some(&v_src.table),
                Some(&spec),
                gamma,
                opt,
                table.as_ref(),
            )?,
        };
        let mut rng = day_rng(seed, TARGET_STREAM, day);
        let out = simulate(
            world,
            &scenario.target,
            &next,
            gamma,
            cfg.dispatch.radius,
            &mut rng,
        )?;
        buffer.push_day(EnvTag::Target, out.tuples)?;
        series.push(out.metrics);
        table = Some(next);
    }
    Ok(series)
}

/// Per-seed daily metrics of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSeries {
    pub seeds: Vec<u64>,
    /// `per_seed[s][d]` is seed `s`, target day `d`.
    pub per_seed: Vec<Vec<DayMetrics>>,
}

impl ExperimentSeries {
    pub fn days(&self) -> usize {
        self.per_seed.first().map_or(0, Vec::len)
    }

    /// Seed-averaged reward per day.
    pub fn mean_reward(&self) -> Vec<f64> {
        (0..self.days())
            .map(|d| {
                self.per_seed.iter().map(|s| s[d].reward).sum::<f64>() / self.per_seed.len() as f64
            })
            .collect()
    }
}

pub fn run_experiment(
    scenario: &Scenario,
    source: &(Buffer, SourceValue),
    kind: PolicyKind,
    days: usize,
    gamma: f64,
    lambda: f64,
    seeds: &[u64],
) -> Result<ExperimentSeries> {
    let per_seed = seeds
        .iter()
        .map(|&s| run_seed(scenario, source, kind, days, gamma, lambda, s))
        .collect::<Result<_>>()?;
    Ok(ExperimentSeries {
        seeds: seeds.to_vec(),
        per_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Iteration {
    /// From 1.
    pub iteration: usize,
    pub reward: f64,
    /// Sup-norm change of the value table after this pass.
    pub delta: f64,
}

/// Replays target day 0 of `seed` `repetitions` times. Pass `i` dispatches
/// with the table fitted after pass `i - 1`; the log accumulates every pass.
pub fn repeat_single_day(
    scenario: &Scenario,
    source: &(Buffer, SourceValue),
    kind: PolicyKind,
    repetitions: usize,
    gamma: f64,
    lambda: f64,
    seed: u64,
) -> Result<Vec<Iteration>> {
    if repetitions == 0 {
        return Err(Error::domain("repetitions must be at least 1"));
    }
    let cfg = &scenario.config;
    let world = &scenario.world;
    let (source_buffer, v_src) = source;
    let spec = v_src.spec(lambda, cfg.transfer.margin)?;
    let opt = &cfg.transfer.optimizer;
    let mut buffer = if kind.needs_source() {
        source_buffer.clone()
    } else {
        Buffer::new(world.horizon(), world.n_cells())
    };
    let mut table = evaluate_policy_value(
        kind,
        &buffer,
        Some(&v_src.table),
        Some(&spec),
        gamma,
        opt,
        None,
    )?;
    let mut out = Vec::with_capacity(repetitions);
    for iteration in 1..=repetitions {
        let mut rng = day_rng(seed, TARGET_STREAM, 0);
        let day = simulate(
            world,
            &scenario.target,
            &table,
            gamma,
            cfg.dispatch.radius,
            &mut rng,
        )?;
        buffer.push_day(EnvTag::Target, day.tuples)?;
        let next = evaluate_policy_value(
            kind,
            &buffer,
            Some(&v_src.table),
            Some(&spec),
            gamma,
            opt,
            Some(&table),
        )?;
        out.push(Iteration {
            iteration,
            reward: day.metrics.reward,
            delta: next.sup_distance(&table)?,
        });
        table = next;
    }
    Ok(out)
}

/// Value of `model` under myopic dispatch, estimated by DP from `days` logged
/// days. Used as a reference table for each environment.
pub fn oracle_values(
    scenario: &Scenario,
    model: &DemandModel,
    gamma: f64,
    days: usize,
    seed: u64,
) -> Result<ValueTable> {
    let world = &scenario.world;
    let zeros = ValueTable::zeros(world.horizon(), world.n_cells(), gamma);
    let mut buffer = Buffer::new(world.horizon(), world.n_cells());
    for day in 0..days {
        let mut rng = day_rng(seed, SOURCE_STREAM ^ TARGET_STREAM, day);
        let out = simulate(
            world,
            model,
            &zeros,
            gamma,
            scenario.config.dispatch.radius,
            &mut rng,
        )?;
        buffer.push_day(EnvTag::Target, out.tuples)?;
    }
    dp_evaluate(&buffer.indexed(&[EnvTag::Target])?, gamma, None)
}
