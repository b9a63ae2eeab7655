//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtransfer::dispatch::{advantage_transform, km_match};
use vtransfer::env::TransitionTuple;
use vtransfer::gpi::PolicyKind;
use vtransfer::harness::{self, DayRow};
use vtransfer::scenario::{Scenario, ScenarioConfig};
use vtransfer::transfer::{
    concordance_loss, default_pair_set, hinge_penalty, objective_gradient, penalized_objective,
    solve_time_step, transfer_evaluate, ConcordanceSpec, OptimizerSettings, StepProblem,
};
use vtransfer::valuation::{dp_evaluate, IndexedBuffer, ValueTable};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_row<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_table<R: Rng>(rng: &mut R, n: usize, horizon: usize, scale: f64) -> ValueTable {
    ValueTable::from_rows(
        n,
        0.9,
        &(0..horizon)
            .map(|_| random_row(rng, n, scale))
            .collect::<Vec<_>>(),
    )
    .unwrap()
}

fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

fn default_config() -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/default.toml");
    ScenarioConfig::load(&path).unwrap()
}

fn dp_td_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let (n, horizon) = (20, 48);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let buf = IndexedBuffer::new(common::random_tuples(&mut r, n, horizon, 1000), horizon, n)
            .unwrap();
        let source = random_table(&mut r, n, horizon, 5.0);
        let spec = ConcordanceSpec::new(default_pair_set(&source, 0.1).unwrap(), 0.0, 1.0).unwrap();
        let pt = transfer_evaluate(
            &buf,
            &source,
            &spec,
            0.9,
            &OptimizerSettings::default(),
            None,
        )
        .unwrap();
        worst = worst.max(
            pt.sup_distance(&dp_evaluate(&buf, 0.9, None).unwrap())
                .unwrap(),
        );
    }
    let t = secs(start.elapsed());
    outcome(
        worst < 1e-6 && t < 10.0,
        format!("max |diff| {worst:e} (< 1e-6), {t:.2} s (< 10 s)"),
    )
}

fn km_exactness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(102);
    let (mut wrong, mut moved) = (0, 0);
    for _ in 0..200 {
        let (m, n) = (r.random_range(0..=6), r.random_range(0..=6));
        let problem = common::random_match_problem(&mut r, m, n);
        let best = common::brute_force_best(&problem);
        let result = km_match(&problem);
        if result.objective != best || !common::is_valid_matching(&problem, &result.assignment) {
            wrong += 1;
        }
        let shifted = km_match(&advantage_transform(&problem));
        if problem.objective_of(&shifted.assignment) != best {
            moved += 1;
        }
    }
    let t = secs(start.elapsed());
    outcome(
        wrong == 0 && moved == 0 && t < 5.0,
        format!("{wrong} objective mismatches, {moved} argmax changes under the advantage shift, {t:.2} s (< 5 s)"),
    )
}

fn step_tuples<R: Rng>(r: &mut R, n: usize, horizon: usize, count: usize) -> Vec<TransitionTuple> {
    common::random_tuples(r, n, horizon, count * 4 * horizon)
        .into_iter()
        .filter(|tp| tp.start.t == 0)
        .take(count)
        .collect()
}

fn subgradient_check() -> Outcome {
    let mut r = rng(103);
    let (n, horizon, h) = (6, 5, 1e-5);
    let (mut points, mut worst) = (0, 0.0f64);
    while points < 1000 {
        let later = random_table(&mut r, n, horizon, 5.0);
        let tuples = step_tuples(&mut r, n, horizon, 12);
        let source = random_row(&mut r, n, 5.0);
        let spec = ConcordanceSpec::new(
            all_pairs(n),
            r.random_range(0.0..20.0),
            r.random_range(0.2..3.0),
        )
        .unwrap();
        let row = random_row(&mut r, n, 5.0);
        let kink = spec.pairs().iter().any(|&(i, j)| {
            let d = row[i] - row[j];
            source[i] == source[j]
                || (d - spec.margin()).abs() < 4.0 * h
                || (-d - spec.margin()).abs() < 4.0 * h
        });
        if kink {
            continue;
        }
        let f = |x: &[f64]| penalized_objective(x, &tuples, &later, &source, &spec, 0.9);
        let g = objective_gradient(&row, &tuples, &later, &source, &spec, 0.9);
        for i in 0..n {
            let (mut up, mut down) = (row.clone(), row.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (f(&up) - f(&down)) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
        }
        points += 1;
    }
    let mut violations = 0;
    for _ in 0..10_000 {
        let spec = ConcordanceSpec::new([(0, 1)], 1.0, r.random_range(1.0..4.0)).unwrap();
        let (row, source) = (random_row(&mut r, 2, 10.0), random_row(&mut r, 2, 10.0));
        let indicator = ((row[0] - row[1]) * (source[0] - source[1]) < 0.0) as u8 as f64;
        if hinge_penalty(&row, &source, &spec) < indicator {
            violations += 1;
        }
    }
    outcome(
        worst < 1e-5 && violations == 0,
        format!("max rel-err {worst:.2e} over 1000 points (< 1e-5), {violations} hinge < indicator violations in 10000 pairs"),
    )
}

fn optimizer_soundness() -> Outcome {
    let mut r = rng(104);
    let later = ValueTable::zeros(2, 2, 0.9);
    let (mut worst, mut rising) = (0.0f64, 0);
    for _ in 0..50 {
        let count = r.random_range(1..=5);
        let mut tuples = step_tuples(&mut r, 2, 2, count);
        for tp in &mut tuples {
            tp.reward = r.random_range(0.0..1.5);
        }
        let source = [r.random_range(0.0..1.0), r.random_range(0.0..1.0)];
        let (lambda, margin) = (r.random_range(0.1..3.0), r.random_range(0.1..1.0));
        let spec = ConcordanceSpec::new([(0, 1)], lambda, margin).unwrap();
        let problem = StepProblem::from_tuples(0, 2, &tuples, &later, 0.9);
        let init = random_row(&mut r, 2, 1.0);
        let out = solve_time_step(
            &problem,
            &init,
            &source,
            &spec,
            &OptimizerSettings::default(),
        )
        .unwrap();
        if out.trace.windows(2).any(|w| w[1] > w[0]) {
            rising += 1;
        }
        // oracle: the objective written out from the tuples, minimised on a 1e-3 lattice
        let value = |v: [f64; 2]| {
            let sq: f64 = tuples
                .iter()
                .map(|tp| (v[tp.start.cell] - tp.reward).powi(2))
                .sum();
            let (hi, lo) = if source[0] > source[1] {
                (0, 1)
            } else {
                (1, 0)
            };
            let hinge = if source[0] == source[1] {
                0.0
            } else {
                (margin - (v[hi] - v[lo])).max(0.0)
            };
            sq + lambda * hinge
        };
        let (lo, hi) = (-margin - 0.01, 1.5 + margin + 0.01);
        let steps = ((hi - lo) / 1e-3).ceil() as usize;
        let mut grid = f64::INFINITY;
        for a in 0..=steps {
            for b in 0..=steps {
                grid = grid.min(value([lo + a as f64 * 1e-3, lo + b as f64 * 1e-3]));
            }
        }
        worst = worst.max((value([out.row[0], out.row[1]]) - grid).abs());
    }
    outcome(
        worst <= 2e-3 && rising == 0,
        format!("max |solver - grid| {worst:.2e} (<= 2e-3), {rising} runs with a rising best-objective trace"),
    )
}

fn concordance_invariants() -> Outcome {
    let mut r = rng(105);
    let mut violations = [0usize; 4];
    for _ in 0..1000 {
        let (n, horizon) = (r.random_range(2..8), r.random_range(1..6));
        let spec = ConcordanceSpec::new(all_pairs(n), 1.0, 1.0).unwrap();
        let (a, b) = (
            random_table(&mut r, n, horizon, 10.0),
            random_table(&mut r, n, horizon, 10.0),
        );
        let map = |t: &ValueTable, f: &dyn Fn(f64) -> f64| {
            let rows: Vec<Vec<f64>> = (0..horizon)
                .map(|s| t.row(s).iter().map(|&v| f(v)).collect())
                .collect();
            ValueTable::from_rows(n, 0.9, &rows).unwrap()
        };
        let loss = |x: &ValueTable, y: &ValueTable| concordance_loss(x, y, &spec).unwrap();
        violations[0] += (loss(&a, &a) != 0.0) as usize;
        violations[1] += (loss(&a, &map(&a, &|v| -v)) != 1.0) as usize;
        violations[2] += (loss(&a, &b) != loss(&b, &a)) as usize;
        let (s, c): (f64, f64) = (r.random_range(0.01..100.0), r.random_range(-50.0..50.0));
        violations[3] += (loss(&a, &map(&b, &|v| s * v + c)) != loss(&a, &b)) as usize;
    }
    outcome(
        violations.iter().all(|&v| v == 0),
        format!(
            "violations over 1000 pairs: identity {}, reversal {}, symmetry {}, affine {}",
            violations[0], violations[1], violations[2], violations[3]
        ),
    )
}

fn oracle_concordance() -> Outcome {
    let start = Instant::now();
    let scenario = Scenario::build(default_config()).unwrap();
    let (src, tgt) = harness::oracle_tables(&scenario, 0.9, 20, 0).unwrap();
    let rate = harness::concordance(&scenario.config, &src, &tgt)
        .unwrap()
        .aggregate;
    let t = secs(start.elapsed());
    outcome(
        rate > 0.80 && t < 30.0,
        format!("aggregate rate {rate:.4} (> 0.80), {t:.2} s (< 30 s)"),
    )
}

fn reward(rows: &[DayRow], policy: PolicyKind, lambda: Option<f64>, seed: u64, day: usize) -> f64 {
    rows.iter()
        .find(|r| {
            r.policy == policy
                && r.gamma == 0.9
                && r.lambda == lambda
                && r.seed == seed
                && r.day == day
        })
        .map(|r| r.metrics.reward)
        .expect("grid row present")
}

fn seed_mean(
    rows: &[DayRow],
    seeds: &[u64],
    policy: PolicyKind,
    lambda: Option<f64>,
    days: &[usize],
) -> f64 {
    let total: f64 = seeds
        .iter()
        .flat_map(|&s| days.iter().map(move |&d| (s, d)))
        .map(|(s, d)| reward(rows, policy, lambda, s, d))
        .sum();
    total / (seeds.len() * days.len()) as f64
}

const LAMBDA: f64 = 10.0;

fn qualitative_ordering(out: &std::path::Path) -> Outcome {
    let config = default_config();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let start = Instant::now();
    let report = harness::simulate(&config, out, workers).unwrap();
    let t = secs(start.elapsed());
    let rows = &report.rows;
    let seeds = &config.experiment.seeds;
    let last = config.experiment.days;
    let pt = (PolicyKind::PatternTransfer, Some(LAMBDA));
    let to = (PolicyKind::TargetOnly, None);

    let diffs: Vec<f64> = seeds
        .iter()
        .map(|&s| reward(rows, pt.0, pt.1, s, 1) - reward(rows, to.0, to.1, s, 1))
        .collect();
    let wins = diffs.iter().filter(|d| **d > 0.0).count();
    let untied = diffs.iter().filter(|d| **d != 0.0).count();
    let p = common::sign_test_p(wins, untied);
    let jumpstart = p < 0.05;

    let early: Vec<usize> = (1..=5.min(last)).collect();
    let (pt_early, to_early) = (
        seed_mean(rows, seeds, pt.0, pt.1, &early),
        seed_mean(rows, seeds, to.0, to.1, &early),
    );

    let fin = |p: PolicyKind, l: Option<f64>| seed_mean(rows, seeds, p, l, &[last]);
    let (f_pt, f_to, f_nc, f_so, f_gr) = (
        fin(pt.0, pt.1),
        fin(to.0, to.1),
        fin(PolicyKind::NaivelyCombine, None),
        fin(PolicyKind::SourceOnly, None),
        fin(PolicyKind::Greedy, None),
    );
    let middle = [f_to, f_nc, f_so];
    let ordering = middle.iter().all(|&m| f_pt >= m && m >= f_gr);

    outcome(
        jumpstart && pt_early > to_early && ordering && t < 300.0 && seeds.len() >= 10,
        format!(
            "gamma 0.9, lambda {LAMBDA}: day-1 wins {wins}/{untied} (sign test p = {p:.4} < 0.05); \
             days 1-5 mean {pt_early:.1} vs {to_early:.1}; day {last} PT {f_pt:.1}, TO {f_to:.1}, NC {f_nc:.1}, \
             SO {f_so:.1}, greedy {f_gr:.1}; full grid {t:.1} s (< 300 s)"
        ),
    )
}

fn repeated_day() -> Outcome {
    let mut config = default_config();
    config.experiment.policies = vec![PolicyKind::PatternTransfer, PolicyKind::TargetOnly];
    config.experiment.gammas = vec![0.9];
    config.experiment.lambdas = vec![LAMBDA];
    let dir = tempfile::tempdir().unwrap();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = harness::repeat_day(&config, dir.path(), workers).unwrap();
    let needed = |policy: PolicyKind, seed: u64| {
        let rewards: Vec<f64> = rows
            .iter()
            .filter(|r| r.cell.policy == policy && r.cell.seed == seed)
            .map(|r| r.reward)
            .collect();
        harness::iterations_to_fraction(&rewards, 0.95).expect("at least one iteration")
    };
    let seeds = &config.experiment.seeds;
    let mut detail = Vec::new();
    let mut ok = 0;
    for &s in seeds {
        let (a, b) = (
            needed(PolicyKind::PatternTransfer, s),
            needed(PolicyKind::TargetOnly, s),
        );
        ok += (a <= b) as usize;
        detail.push(format!("{a}/{b}"));
    }
    outcome(
        ok >= 8,
        format!(
            "PT <= TO iterations to 95% on {ok}/{} seeds (>= 8); per seed PT/TO: {}",
            seeds.len(),
            detail.join(" ")
        ),
    )
}

fn reproducibility(first: &std::path::Path) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = ScenarioConfig::load(&first.join("manifest.toml")).unwrap();
    // a different worker count must not change any byte
    harness::simulate(&config, dir.path(), 1).unwrap();
    let same: Vec<String> = ["per_day.csv", "summary.csv", "manifest.toml"]
        .iter()
        .filter(|f| {
            std::fs::read(first.join(f)).unwrap() != std::fs::read(dir.path().join(f)).unwrap()
        })
        .map(|f| f.to_string())
        .collect();
    outcome(
        same.is_empty(),
        format!("re-run from manifest, differing files: {same:?}"),
    )
}

fn main() {
    let grid_dir = tempfile::tempdir().unwrap();
    type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("dp-td equivalence", Box::new(dp_td_equivalence)),
        ("matching exactness", Box::new(km_exactness)),
        ("subgradient correctness", Box::new(subgradient_check)),
        ("optimizer soundness", Box::new(optimizer_soundness)),
        (
            "concordance-loss invariants",
            Box::new(concordance_invariants),
        ),
        ("oracle value concordance", Box::new(oracle_concordance)),
        (
            "qualitative ordering",
            Box::new(|| qualitative_ordering(grid_dir.path())),
        ),
        ("repeated single day", Box::new(repeated_day)),
        (
            "reproducibility",
            Box::new(|| reproducibility(grid_dir.path())),
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let o = check();
        failed += !o.pass as usize;
        println!(
            "{} {}. {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
