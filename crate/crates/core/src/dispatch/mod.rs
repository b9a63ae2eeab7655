//! Collective greedy matching of idle drivers to open orders.
//!
//! Each window is a bipartite problem: driver `l` either takes a feasible
//! order `k` and is worth `Q(l, k)`, or stays unmatched and is worth
//! `Q(l, 0) = V(s_l)`. The assignment maximising the summed scores is solved
//! exactly.

mod hungarian;

use serde::Serialize;

use crate::env::{serve_outcome, DriverSlot, GridWorld, OrderRequest};
use crate::error::{Error, Result};
use crate::valuation::{q_value, ValueTable};

/// `m x (n + 1)` score matrix; column 0 is the unmatched option.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchProblem {
    n_drivers: usize,
    n_orders: usize,
    scores: Vec<f64>,
    feasible: Vec<bool>,
    /// Per-driver constant removed by [`advantage_transform`].
    offsets: Vec<f64>,
}

impl MatchProblem {
    /// `scores[l][0]` is driver `l`'s null option. `feasible`, when given,
    /// must mark column 0 feasible in every row.
    pub fn from_rows(scores: &[Vec<f64>], feasible: Option<&[Vec<bool>]>) -> Result<Self> {
        let m = scores.len();
        let width = scores.first().map_or(1, Vec::len);
        if width == 0 {
            return Err(Error::domain("score rows need the null column"));
        }
        let mut flat = Vec::with_capacity(m * width);
        let mut mask = Vec::with_capacity(m * width);
        for (l, row) in scores.iter().enumerate() {
            if row.len() != width {
                return Err(Error::ShapeMismatch {
                    expected: format!("{width} scores in row {l}"),
                    found: row.len().to_string(),
                });
            }
            flat.extend_from_slice(row);
            match feasible {
                Some(f) => {
                    let frow = f.get(l).filter(|r| r.len() == width).ok_or_else(|| {
                        Error::ShapeMismatch {
                            expected: format!("{width} mask entries in row {l}"),
                            found: f.get(l).map_or(0, Vec::len).to_string(),
                        }
                    })?;
                    if !frow[0] {
                        return Err(Error::domain(format!(
                            "null option of driver {l} cannot be masked"
                        )));
                    }
                    mask.extend_from_slice(frow);
                }
                None => mask.extend(std::iter::repeat_n(true, width)),
            }
        }
        Self::from_flat(m, width - 1, flat, mask)
    }

    pub(crate) fn from_flat(
        m: usize,
        n: usize,
        scores: Vec<f64>,
        feasible: Vec<bool>,
    ) -> Result<Self> {
        if scores.len() != m * (n + 1) || feasible.len() != m * (n + 1) {
            return Err(Error::ShapeMismatch {
                expected: format!("{m}x{} scores and mask", n + 1),
                found: format!("{} scores, {} mask entries", scores.len(), feasible.len()),
            });
        }
        let problem = Self {
            n_drivers: m,
            n_orders: n,
            scores,
            feasible,
            offsets: vec![0.0; m],
        };
        for l in 0..m {
            for k in 0..=n {
                if problem.is_feasible(l, k) && !problem.score(l, k).is_finite() {
                    return Err(Error::domain(format!("score ({l}, {k}) is not finite")));
                }
            }
        }
        Ok(problem)
    }

    pub fn n_drivers(&self) -> usize {
        self.n_drivers
    }

    pub fn n_orders(&self) -> usize {
        self.n_orders
    }

    /// Column `k = 0` is the null option, `k >= 1` is order `k - 1`.
    #[inline]
    pub fn score(&self, l: usize, k: usize) -> f64 {
        self.scores[l * (self.n_orders + 1) + k]
    }

    #[inline]
    pub fn is_feasible(&self, l: usize, k: usize) -> bool {
        self.feasible[l * (self.n_orders + 1) + k]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Objective of an assignment, summed in driver order.
    pub fn objective_of(&self, assignment: &[Option<usize>]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .map(|(l, c)| self.score(l, c.map_or(0, |k| k + 1)))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    /// For each driver, the index of its order, or `None`.
    pub assignment: Vec<Option<usize>>,
    pub objective: f64,
}

fn assemble(
    drivers: &[DriverSlot],
    orders: &[OrderRequest],
    world: &GridWorld,
    gamma: f64,
    radius: u32,
    score: impl Fn(&DriverSlot, Option<&OrderRequest>) -> f64,
) -> MatchProblem {
    let (m, n) = (drivers.len(), orders.len());
    let mut scores = Vec::with_capacity(m * (n + 1));
    let mut feasible = Vec::with_capacity(m * (n + 1));
    for d in drivers {
        scores.push(score(d, None));
        feasible.push(true);
        for o in orders {
            let ok = world.pickup_time(d.state.cell, o.origin) <= radius
                && serve_outcome(world, d.state, o, gamma).is_some();
            scores.push(if ok { score(d, Some(o)) } else { 0.0 });
            feasible.push(ok);
        }
    }
    MatchProblem {
        n_drivers: m,
        n_orders: n,
        scores,
        feasible,
        offsets: vec![0.0; m],
    }
}

/// Scores from a value table. Pairs whose pickup exceeds `radius` steps, or
/// whose trip could not start before the horizon, are masked.
pub fn build_problem(
    drivers: &[DriverSlot],
    orders: &[OrderRequest],
    table: &ValueTable,
    world: &GridWorld,
    gamma: f64,
    radius: u32,
) -> MatchProblem {
    assemble(drivers, orders, world, gamma, radius, |d, o| {
        q_value(table, world, d, o, gamma)
    })
}

/// Myopic scores: the order's immediate discounted reward, nothing for staying idle.
pub fn greedy_scores(
    drivers: &[DriverSlot],
    orders: &[OrderRequest],
    world: &GridWorld,
    gamma: f64,
    radius: u32,
) -> MatchProblem {
    assemble(drivers, orders, world, gamma, radius, |d, o| match o {
        Some(o) => serve_outcome(world, d.state, o, gamma).map_or(0.0, |s| s.reward),
        None => 0.0,
    })
}

/// Subtracts each driver's null score from its row. The optimal assignment
/// is unchanged; the removed constants accumulate in `offsets`.
pub fn advantage_transform(problem: &MatchProblem) -> MatchProblem {
    let mut out = problem.clone();
    let width = problem.n_orders + 1;
    for l in 0..problem.n_drivers {
        let base = problem.score(l, 0);
        out.scores[l * width..(l + 1) * width]
            .iter_mut()
            .for_each(|s| *s -= base);
        out.offsets[l] += base;
    }
    out
}

/// Exact maximiser of the summed scores over assignments where every driver
/// takes at most one feasible order and every order goes to at most one
/// driver. Deterministic: equal-score alternatives resolve toward lower
/// indices in the solver's scan order.
pub fn km_match(problem: &MatchProblem) -> MatchResult {
    let (m, n) = (problem.n_drivers, problem.n_orders);
    let mut assignment = vec![None; m];
    if m > 0 && n > 0 {
        let inf = f64::INFINITY;
        // gain of driver l serving order k over staying unmatched
        let gain = |l: usize, k: usize| {
            if problem.is_feasible(l, k + 1) {
                problem.score(l, k + 1) - problem.score(l, 0)
            } else {
                inf
            }
        };
        if m <= n {
            // rows: drivers; columns: orders, then one private "unmatched" column per driver
            let cols = n + m;
            let mut cost = vec![inf; m * cols];
            for l in 0..m {
                for k in 0..n {
                    let g = gain(l, k);
                    if g.is_finite() {
                        cost[l * cols + k] = -g;
                    }
                }
                cost[l * cols + n + l] = 0.0;
            }
            let rows = hungarian::min_cost_assignment(m, cols, &cost);
            for (l, &j) in rows.iter().enumerate() {
                if j < n {
                    assignment[l] = Some(j);
                }
            }
        } else {
            // rows: orders; columns: drivers, then one private "unserved" column per order
            let cols = m + n;
            let mut cost = vec![inf; n * cols];
            for k in 0..n {
                for l in 0..m {
                    let g = gain(l, k);
                    if g.is_finite() {
                        cost[k * cols + l] = -g;
                    }
                }
                cost[k * cols + m + k] = 0.0;
            }
            let rows = hungarian::min_cost_assignment(n, cols, &cost);
            for (k, &j) in rows.iter().enumerate() {
                if j < m {
                    assignment[j] = Some(k);
                }
            }
        }
    }
    let objective = problem.objective_of(&assignment);
    MatchResult {
        assignment,
        objective,
    }
}

/// A window's inputs and decision, for JSON failure dumps.
#[derive(Debug, Clone, Serialize)]
pub struct DispatchDump<'a> {
    pub t: usize,
    pub drivers: &'a [DriverSlot],
    pub orders: &'a [OrderRequest],
    pub problem: &'a MatchProblem,
    pub result: &'a MatchResult,
}

impl DispatchDump<'_> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self)
            .expect("dump contains only finite numbers and plain data")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{DriverId, OrderId, State};

    #[test]
    fn single_order_is_served() {
        let p = MatchProblem::from_rows(&[vec![0.0, 5.0]], None).unwrap();
        let r = km_match(&p);
        assert_eq!(r.assignment, vec![Some(0)]);
        assert_eq!(r.objective, 5.0);
    }

    #[test]
    fn two_by_two_instance() {
        let p = MatchProblem::from_rows(&[vec![0.0, 5.0, 1.0], vec![0.0, 2.0, 4.0]], None).unwrap();
        let r = km_match(&p);
        assert_eq!(r.assignment, vec![Some(0), Some(1)]);
        assert_eq!(r.objective, 9.0);
    }

    #[test]
    fn high_null_value_keeps_driver_unmatched() {
        let p = MatchProblem::from_rows(&[vec![6.0, 5.0], vec![0.0, 1.0]], None).unwrap();
        let r = km_match(&p);
        assert_eq!(r.assignment, vec![None, Some(0)]);
        assert_eq!(r.objective, 7.0);
    }

    #[test]
    fn masked_entries_are_never_selected() {
        let scores = [vec![0.0, 100.0, 1.0]];
        let mask = [vec![true, false, true]];
        let r = km_match(&MatchProblem::from_rows(&scores, Some(&mask)).unwrap());
        assert_eq!(r.assignment, vec![Some(1)]);
    }

    #[test]
    fn advantage_zeroes_null_column_and_keeps_offsets() {
        let scores = [vec![3.0, 5.0, 1.0], vec![-2.0, 2.0, 4.0]];
        let mask = [vec![true, false, false], vec![true, true, true]];
        let p = MatchProblem::from_rows(&scores, Some(&mask)).unwrap();
        let a = advantage_transform(&p);
        assert_eq!((a.score(0, 0), a.score(1, 0)), (0.0, 0.0));
        assert_eq!(a.offsets(), &[3.0, -2.0]);
        assert!(!a.is_feasible(0, 1) && !a.is_feasible(0, 2));
        let (r, ra) = (km_match(&p), km_match(&a));
        assert_eq!(r.assignment, ra.assignment);
        assert_eq!(r.objective, ra.objective + 1.0);
    }

    fn slot(id: u32, t: usize, cell: usize) -> DriverSlot {
        DriverSlot {
            driver_id: DriverId(id),
            state: State::new(t, cell),
        }
    }

    fn order(
        id: u64,
        origin: usize,
        destination: usize,
        revenue: f64,
        duration: u32,
    ) -> OrderRequest {
        OrderRequest {
            id: OrderId(id),
            origin,
            destination,
            revenue,
            duration,
            created_at: 0,
            patience_draw: 0.0,
        }
    }

    #[test]
    fn build_without_orders_is_state_values() {
        let world = GridWorld::new(2, 6, vec![1, 2, 2, 1]).unwrap();
        let mut v = ValueTable::zeros(6, 2, 0.9);
        v.set(1, 0, 1.5);
        v.set(1, 1, -0.5);
        let p = build_problem(&[slot(0, 1, 0), slot(1, 1, 1)], &[], &v, &world, 0.9, 5);
        assert_eq!((p.n_drivers(), p.n_orders()), (2, 0));
        assert_eq!((p.score(0, 0), p.score(1, 0)), (1.5, -0.5));
    }

    #[test]
    fn build_direct_substitution() {
        let world = GridWorld::new(2, 10, vec![1, 2, 2, 1]).unwrap();
        let mut v = ValueTable::zeros(10, 2, 0.9);
        v.set(4, 1, 2.0);
        // R = 2 over 2 steps: 1 + 0.9 = 1.9
        let p = build_problem(
            &[slot(0, 2, 0)],
            &[order(0, 0, 1, 2.0, 2)],
            &v,
            &world,
            0.9,
            5,
        );
        assert!((p.score(0, 1) - 3.52).abs() < 1e-12);
    }

    #[test]
    fn radius_and_horizon_mask() {
        let world = GridWorld::new(2, 4, vec![1, 3, 3, 1]).unwrap();
        let v = ValueTable::zeros(4, 2, 0.9);
        let orders = [order(0, 1, 0, 4.0, 3), order(1, 0, 1, 4.0, 3)];
        let p = build_problem(&[slot(0, 0, 0)], &orders, &v, &world, 0.9, 2);
        assert!(!p.is_feasible(0, 1), "pickup of 3 steps exceeds radius 2");
        assert!(p.is_feasible(0, 2));
        let late = build_problem(&[slot(0, 3, 0)], &orders, &v, &world, 0.9, 5);
        assert!(!late.is_feasible(0, 1), "trip would start at the horizon");
        assert!(late.is_feasible(0, 2));
    }

    #[test]
    fn greedy_matches_zero_table_and_prefers_revenue() {
        let world = GridWorld::new(2, 10, vec![1, 2, 2, 1]).unwrap();
        let drivers = [slot(0, 0, 0)];
        let orders = [order(0, 0, 1, 3.0, 2), order(1, 0, 1, 10.0, 2)];
        let g = greedy_scores(&drivers, &orders, &world, 0.9, 3);
        let z = build_problem(
            &drivers,
            &orders,
            &ValueTable::zeros(10, 2, 0.9),
            &world,
            0.9,
            3,
        );
        assert_eq!(g, z);
        assert_eq!(km_match(&g).assignment, vec![Some(1)]);
    }

    #[test]
    fn dump_is_json() {
        let p = MatchProblem::from_rows(&[vec![0.0, 5.0]], None).unwrap();
        let r = km_match(&p);
        let dump = DispatchDump {
            t: 3,
            drivers: &[slot(0, 3, 0)],
            orders: &[order(7, 0, 1, 5.0, 1)],
            problem: &p,
            result: &r,
        };
        let v: serde_json::Value = serde_json::from_str(&dump.to_json()).unwrap();
        assert_eq!(v["result"]["objective"], 5.0);
    }
}
