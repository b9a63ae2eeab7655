#![allow(dead_code)]

use rand::Rng;
use vtransfer::dispatch::MatchProblem;
use vtransfer::env::{Action, OrderId, State, TransitionTuple};

/// Random tuples over an `n_cells x horizon` grid. Serve tuples carry unique
/// order ids; one-step zero-reward stays are idles.
pub fn random_tuples<R: Rng>(
    rng: &mut R,
    n_cells: usize,
    horizon: usize,
    count: usize,
) -> Vec<TransitionTuple> {
    (0..count)
        .map(|j| {
            let t = rng.random_range(0..horizon);
            let finish_t = rng.random_range(t + 1..=(t + 6).min(horizon));
            let start = State::new(t, rng.random_range(0..n_cells));
            if rng.random_bool(0.3) {
                TransitionTuple {
                    start,
                    action: Action::Idle,
                    reward: 0.0,
                    finish: State::new(t + 1, start.cell),
                }
            } else {
                TransitionTuple {
                    start,
                    action: Action::Serve {
                        order: OrderId(j as u64),
                        completed: true,
                    },
                    reward: rng.random_range(0.0..10.0),
                    finish: State::new(finish_t, rng.random_range(0..n_cells)),
                }
            }
        })
        .collect()
}

/// Expected return by memoised forward recursion: the value of a state is
/// the average over its tuples of reward plus discounted value of the finish.
/// Unvisited states are worth zero.
pub fn recursive_values(
    tuples: &[TransitionTuple],
    n_cells: usize,
    horizon: usize,
    gamma: f64,
) -> Vec<Vec<f64>> {
    fn value(
        t: usize,
        c: usize,
        tuples: &[TransitionTuple],
        gamma: f64,
        horizon: usize,
        memo: &mut Vec<Vec<Option<f64>>>,
    ) -> f64 {
        if t >= horizon {
            return 0.0;
        }
        if let Some(v) = memo[t][c] {
            return v;
        }
        let mut total = 0.0;
        let mut count = 0;
        for tp in tuples.iter().filter(|tp| tp.start == State::new(t, c)) {
            let next = value(tp.finish.t, tp.finish.cell, tuples, gamma, horizon, memo);
            total += tp.reward + gamma.powi((tp.finish.t - t) as i32) * next;
            count += 1;
        }
        let v = if count == 0 {
            0.0
        } else {
            total / count as f64
        };
        memo[t][c] = Some(v);
        v
    }
    let mut memo = vec![vec![None; n_cells]; horizon];
    (0..horizon)
        .map(|t| {
            (0..n_cells)
                .map(|c| value(t, c, tuples, gamma, horizon, &mut memo))
                .collect()
        })
        .collect()
}

/// Best total score over every feasible matching, by exhaustive search.
pub fn brute_force_best(problem: &MatchProblem) -> f64 {
    fn go(problem: &MatchProblem, l: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if l == problem.n_drivers() {
            *best = best.max(acc);
            return;
        }
        go(problem, l + 1, used, acc + problem.score(l, 0), best);
        for k in 0..problem.n_orders() {
            if !used[k] && problem.is_feasible(l, k + 1) {
                used[k] = true;
                go(problem, l + 1, used, acc + problem.score(l, k + 1), best);
                used[k] = false;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(
        problem,
        0,
        &mut vec![false; problem.n_orders()],
        0.0,
        &mut best,
    );
    best
}

/// Whether the assignment respects masks and uses each order at most once.
pub fn is_valid_matching(problem: &MatchProblem, assignment: &[Option<usize>]) -> bool {
    let mut used = vec![false; problem.n_orders()];
    assignment.len() == problem.n_drivers()
        && assignment.iter().enumerate().all(|(l, a)| match *a {
            None => true,
            Some(k) => {
                k < problem.n_orders()
                    && problem.is_feasible(l, k + 1)
                    && !std::mem::replace(&mut used[k], true)
            }
        })
}

/// Random instance with scores on a 1/8 grid, so that every sum is exact, and
/// roughly a quarter of the order entries masked.
pub fn random_match_problem<R: Rng>(rng: &mut R, m: usize, n: usize) -> MatchProblem {
    let scores: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            (0..=n)
                .map(|_| rng.random_range(-16i32..=64) as f64 / 8.0)
                .collect()
        })
        .collect();
    let mask: Vec<Vec<bool>> = (0..m)
        .map(|_| (0..=n).map(|k| k == 0 || rng.random_bool(0.75)).collect())
        .collect();
    MatchProblem::from_rows(&scores, Some(&mask)).unwrap()
}

/// One-sided sign test: probability of at least `wins` successes out of `n`
/// fair coin flips.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=n {
        let mut c = 1.0;
        for i in 0..k {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        p += c * 0.5f64.powi(n as i32);
    }
    p
}
