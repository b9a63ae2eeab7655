//! Declarative scenario files.
//!
//! A scenario is a TOML document describing the grid, the source and target
//! demand environments, dispatch, source-period logging, the concordance
//! penalty and the experiment grid. Every run writes the fully resolved
//! config back out as its manifest, which is itself a valid scenario.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{Arrivals, DemandModel, GridWorld, RevenueModel};
use crate::error::{Error, Result};
use crate::gpi::PolicyKind;
use crate::transfer::OptimizerSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridConfig,
    pub source: EnvConfig,
    pub target: EnvConfig,
    #[serde(default)]
    pub dispatch: DispatchConfig,
    #[serde(default)]
    pub source_data: SourceDataConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridConfig {
    /// Row-major lattice; cell `c` sits at `(c % width, c / width)`.
    Lattice {
        width: usize,
        height: usize,
        horizon: usize,
        cells_per_step: f64,
    },
    Explicit {
        horizon: usize,
        /// Square travel-time table in steps.
        travel: Vec<Vec<u32>>,
        /// Optional label per cell; empty strings mean no label.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        tags: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvConfig {
    Hotspot(HotspotConfig),
    Explicit(ExplicitEnvConfig),
    /// Target only: the source environment with rates multiplied by `scale`
    /// and the daily profile delayed by `shift` windows. Every cell's
    /// time-averaged rate is scaled by the same factor, so the spatial
    /// ranking of cells is kept.
    Transformed {
        scale: f64,
        shift: usize,
        /// Fleet size override, placed like the source fleet.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        drivers: Option<u32>,
    },
}

/// Generated demand on a lattice. A cell's rate at window `t` is
/// proportional to `spatial(c) * profile(t)`, normalised to
/// `orders_per_day` expected orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HotspotConfig {
    pub orders_per_day: f64,
    /// Lattice coordinates `[x, y]` of the demand peaks.
    pub centers: Vec<[f64; 2]>,
    /// Gaussian radius of each peak, in cells.
    pub spread: f64,
    /// Spatial weight of a cell far from every center, in [0, 1].
    pub floor: f64,
    /// Time-profile level outside the peaks.
    pub baseline: f64,
    #[serde(default)]
    pub peaks: Vec<PeakConfig>,
    /// Destinations are drawn with weight `spatial(j)^dest_hot_bias * exp(-L1(i, j) / dest_range)`.
    pub dest_hot_bias: f64,
    pub dest_range: f64,
    pub revenue: RevenueConfig,
    pub drivers: u32,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default)]
    pub cancellation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakConfig {
    pub at: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevenueConfig {
    pub base: f64,
    pub per_step: f64,
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// In proportion to the spatial demand weight (largest remainder).
    #[default]
    Demand,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitEnvConfig {
    /// `horizon` rows of `n_cells` arrival rates.
    pub rates: Vec<Vec<f64>>,
    pub destinations: Vec<Vec<f64>>,
    pub revenue: RevenueModel,
    pub drivers: Vec<u32>,
    #[serde(default)]
    pub cancellation: f64,
    #[serde(default)]
    pub arrivals: Arrivals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispatchConfig {
    /// Largest pickup travel time, in steps, for a driver-order pair.
    pub radius: u32,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        Self { radius: 2 }
    }
}

/// How the source-period log is produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceLogging {
    /// Myopic dispatch every source day.
    #[default]
    Greedy,
    /// Policy iteration over the source days, re-evaluating the accumulated
    /// log each day.
    Gpi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceDataConfig {
    pub days: usize,
    /// Seeds the source-period demand; unrelated to the experiment seeds.
    pub seed: u64,
    pub logging: SourceLogging,
}

impl Default for SourceDataConfig {
    fn default() -> Self {
        Self {
            days: 15,
            seed: 0x5eed,
            logging: SourceLogging::Greedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PairsConfig {
    /// Hot cells (top `q` by time-averaged source value) against cold cells.
    Auto {
        q: f64,
    },
    Explicit {
        list: Vec<[usize; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub margin: f64,
    pub pairs: PairsConfig,
    pub optimizer: OptimizerSettings,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            pairs: PairsConfig::Auto { q: 0.1 },
            optimizer: OptimizerSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub policies: Vec<PolicyKind>,
    pub gammas: Vec<f64>,
    /// Penalty weights pattern transfer is run with.
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub days: usize,
    /// Passes over one day for `repeat-day`.
    pub repetitions: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            policies: PolicyKind::ALL.to_vec(),
            gammas: vec![0.9, 0.95],
            lambdas: vec![0.1, 1.0, 10.0],
            seeds: (1..=10).collect(),
            days: 11,
            repetitions: 10,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs contain only TOML-representable values")
    }
}

/// A validated, materialised scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub world: GridWorld,
    pub source: DemandModel,
    pub target: DemandModel,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        Self::build(ScenarioConfig::load(path)?)
    }

    pub fn build(config: ScenarioConfig) -> Result<Self> {
        validate(&config)?;
        let world = build_grid(&config.grid)?;
        let source = match &config.source {
            EnvConfig::Transformed { .. } => {
                return Err(Error::config(
                    "source.kind",
                    "a transformed environment needs a source to transform",
                ))
            }
            env => build_env(env, &world, &config.grid, "source")?,
        };
        let target = match &config.target {
            EnvConfig::Transformed {
                scale,
                shift,
                drivers,
            } => {
                let mut model = source
                    .scaled(*scale)
                    .map_err(|e| Error::config("target.scale", e.to_string()))?
                    .time_shifted(*shift);
                if let Some(total) = drivers {
                    let weights: Vec<f64> =
                        source.initial_drivers().iter().map(|&d| d as f64).collect();
                    let counts = if weights.iter().all(|&w| w == 0.0) {
                        apportion(*total, &vec![1.0; world.n_cells()])
                    } else {
                        apportion(*total, &weights)
                    };
                    model = model.with_initial_drivers(counts)?;
                }
                model
            }
            env => build_env(env, &world, &config.grid, "target")?,
        };
        Ok(Self {
            config,
            world,
            source,
            target,
        })
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive, got {v}")))
    }
}

fn nonnegative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be finite and >= 0, got {v}"),
        ))
    }
}

fn validate(c: &ScenarioConfig) -> Result<()> {
    if c.name.trim().is_empty() {
        return Err(Error::config("name", "must not be empty"));
    }
    let e = &c.experiment;
    if e.policies.is_empty() {
        return Err(Error::config("experiment.policies", "must not be empty"));
    }
    for (i, p) in e.policies.iter().enumerate() {
        if e.policies[..i].contains(p) {
            return Err(Error::config(
                "experiment.policies",
                format!("{p} listed twice"),
            ));
        }
    }
    if e.gammas.is_empty() {
        return Err(Error::config("experiment.gammas", "must not be empty"));
    }
    if let Some(g) = e.gammas.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
        return Err(Error::config(
            "experiment.gammas",
            format!("discount {g} outside (0, 1]"),
        ));
    }
    if e.seeds.is_empty() {
        return Err(Error::config("experiment.seeds", "must not be empty"));
    }
    if e.repetitions == 0 {
        return Err(Error::config(
            "experiment.repetitions",
            "must be at least 1",
        ));
    }
    if e.lambdas.is_empty() && e.policies.iter().any(|p| p.uses_lambda()) {
        return Err(Error::config(
            "experiment.lambdas",
            "must not be empty when pattern-transfer is run",
        ));
    }
    for (i, l) in e.lambdas.iter().enumerate() {
        nonnegative("experiment.lambdas", *l)?;
        if e.lambdas[..i].contains(l) {
            return Err(Error::config(
                "experiment.lambdas",
                format!("{l} listed twice"),
            ));
        }
    }
    positive("transfer.margin", c.transfer.margin)?;
    if let PairsConfig::Auto { q } = c.transfer.pairs {
        if !(q > 0.0 && q <= 0.5) {
            return Err(Error::config(
                "transfer.pairs.q",
                format!("must be in (0, 0.5], got {q}"),
            ));
        }
    }
    c.transfer
        .optimizer
        .validate()
        .map_err(|err| Error::config("transfer.optimizer", err.to_string()))?;
    if c.source_data.days == 0 && e.policies.iter().any(|p| p.needs_source()) {
        return Err(Error::config(
            "source_data.days",
            "must be at least 1 when source-based policies are run",
        ));
    }
    Ok(())
}

fn build_grid(g: &GridConfig) -> Result<GridWorld> {
    match g {
        GridConfig::Lattice {
            width,
            height,
            horizon,
            cells_per_step,
        } => GridWorld::lattice(*width, *height, *horizon, *cells_per_step)
            .map_err(|e| Error::config("grid", e.to_string())),
        GridConfig::Explicit {
            horizon,
            travel,
            tags,
        } => {
            let n = travel.len();
            if let Some(i) = travel.iter().position(|r| r.len() != n) {
                return Err(Error::config(
                    "grid.travel",
                    format!("row {i} has {} entries, expected {n}", travel[i].len()),
                ));
            }
            let world = GridWorld::new(n, *horizon, travel.concat())
                .map_err(|e| Error::config("grid", e.to_string()))?;
            if tags.is_empty() {
                Ok(world)
            } else {
                let tags = tags
                    .iter()
                    .map(|t| (!t.is_empty()).then(|| t.clone()))
                    .collect();
                world
                    .with_tags(tags)
                    .map_err(|e| Error::config("grid.tags", e.to_string()))
            }
        }
    }
}

fn build_env(
    env: &EnvConfig,
    world: &GridWorld,
    grid: &GridConfig,
    which: &str,
) -> Result<DemandModel> {
    let wrap = |e: Error| Error::config(which, e.to_string());
    match env {
        EnvConfig::Hotspot(h) => {
            let GridConfig::Lattice { width, .. } = grid else {
                return Err(Error::config(
                    format!("{which}.kind"),
                    "hotspot demand needs a lattice grid",
                ));
            };
            hotspot(h, world, *width, which)
        }
        EnvConfig::Explicit(x) => {
            let (t, n) = (world.horizon(), world.n_cells());
            if x.rates.len() != t || x.rates.iter().any(|r| r.len() != n) {
                return Err(Error::config(
                    format!("{which}.rates"),
                    format!("expected {t} rows of {n} rates"),
                ));
            }
            if x.destinations.len() != n || x.destinations.iter().any(|r| r.len() != n) {
                return Err(Error::config(
                    format!("{which}.destinations"),
                    format!("expected {n} rows of {n} probabilities"),
                ));
            }
            DemandModel::new(
                world,
                x.rates.concat(),
                x.destinations.concat(),
                x.revenue.clone(),
                x.drivers.clone(),
                x.cancellation,
            )
            .and_then(|m| m.with_arrivals(x.arrivals))
            .map_err(wrap)
        }
        EnvConfig::Transformed { .. } => unreachable!("handled by the caller"),
    }
}

fn hotspot(h: &HotspotConfig, world: &GridWorld, width: usize, which: &str) -> Result<DemandModel> {
    let f = |name: &str| format!("{which}.{name}");
    positive(&f("orders_per_day"), h.orders_per_day)?;
    positive(&f("spread"), h.spread)?;
    positive(&f("dest_range"), h.dest_range)?;
    nonnegative(&f("dest_hot_bias"), h.dest_hot_bias)?;
    nonnegative(&f("baseline"), h.baseline)?;
    nonnegative(&f("cancellation"), h.cancellation)?;
    if !(0.0..=1.0).contains(&h.floor) {
        return Err(Error::config(
            f("floor"),
            format!("must be in [0, 1], got {}", h.floor),
        ));
    }
    if h.centers.is_empty() {
        return Err(Error::config(
            f("centers"),
            "at least one center is required",
        ));
    }
    for p in &h.peaks {
        positive(&f("peaks.width"), p.width)?;
        nonnegative(&f("peaks.height"), p.height)?;
    }
    let (t_len, n) = (world.horizon(), world.n_cells());
    let xy = |c: usize| ((c % width) as f64, (c / width) as f64);

    let spatial: Vec<f64> = (0..n)
        .map(|c| {
            let (x, y) = xy(c);
            let near = h
                .centers
                .iter()
                .map(|[cx, cy]| {
                    (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * h.spread * h.spread)).exp()
                })
                .fold(0.0, f64::max);
            h.floor + (1.0 - h.floor) * near
        })
        .collect();
    let profile: Vec<f64> = (0..t_len)
        .map(|t| {
            h.baseline
                + h.peaks
                    .iter()
                    .map(|p| {
                        p.height * (-((t as f64 - p.at).powi(2)) / (2.0 * p.width * p.width)).exp()
                    })
                    .sum::<f64>()
        })
        .collect();
    let total = spatial.iter().sum::<f64>() * profile.iter().sum::<f64>();
    if total <= 0.0 {
        return Err(Error::config(
            which,
            "spatial weights and time profile leave no demand",
        ));
    }
    let scale = h.orders_per_day / total;
    let rates: Vec<f64> = profile
        .iter()
        .flat_map(|p| spatial.iter().map(move |s| scale * p * s))
        .collect();

    let mut destinations = Vec::with_capacity(n * n);
    for i in 0..n {
        let (xi, yi) = xy(i);
        let row: Vec<f64> = (0..n)
            .map(|j| {
                let (xj, yj) = xy(j);
                let l1 = (xi - xj).abs() + (yi - yj).abs();
                spatial[j].powf(h.dest_hot_bias) * (-l1 / h.dest_range).exp()
            })
            .collect();
        let sum: f64 = row.iter().sum();
        if sum <= 0.0 {
            return Err(Error::config(
                f("dest_hot_bias"),
                format!("cell {i} has no reachable destination"),
            ));
        }
        destinations.extend(row.iter().map(|w| w / sum));
    }

    let drivers = match h.placement {
        Placement::Demand => apportion(h.drivers, &spatial),
        Placement::Uniform => apportion(h.drivers, &vec![1.0; n]),
    };
    let revenue = RevenueModel {
        base: vec![h.revenue.base; n],
        per_step: h.revenue.per_step,
        noise: h.revenue.noise,
    };
    DemandModel::new(world, rates, destinations, revenue, drivers, h.cancellation)
        .map_err(|e| Error::config(which, e.to_string()))
}

/// Largest-remainder split of `total` in proportion to `weights`; leftover
/// units go to the largest remainders, lower index first on ties.
fn apportion(total: u32, weights: &[f64]) -> Vec<u32> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<u32> = quotas.iter().map(|q| q.floor() as u32).collect();
    let assigned: u32 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (quotas[b] - quotas[b].floor())
            .total_cmp(&(quotas[a] - quotas[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().take((total - assigned) as usize) {
        counts[i] += 1;
    }
    counts
}
