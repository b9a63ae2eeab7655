use super::ConcordanceSpec;
use crate::env::TransitionTuple;
use crate::valuation::{IndexedBuffer, ValueTable};

/// Hinge surrogate of the spatial concordance loss at one time step: for each
/// pair the source ranks strictly, `[margin - (v_hi - v_lo)]_+`, where `hi` is
/// the cell with the larger source value.
pub fn hinge_penalty(row: &[f64], source_row: &[f64], spec: &ConcordanceSpec) -> f64 {
    let m = spec.margin();
    spec.pairs()
        .iter()
        .map(|&(i, j)| match favoured(source_row, i, j) {
            Some((hi, lo)) => (m - (row[hi] - row[lo])).max(0.0),
            None => 0.0,
        })
        .sum()
}

#[inline]
fn favoured(source_row: &[f64], i: usize, j: usize) -> Option<(usize, usize)> {
    if source_row[i] < source_row[j] {
        Some((j, i))
    } else if source_row[i] > source_row[j] {
        Some((i, j))
    } else {
        None
    }
}

/// Adds the hinge subgradient (without `lambda`) into `out`. A pair is active
/// when its favoured margin is strictly short of `margin`; the favoured cell
/// gets -1 and its partner +1.
pub(crate) fn hinge_subgradient(
    row: &[f64],
    source_row: &[f64],
    spec: &ConcordanceSpec,
    out: &mut [f64],
) {
    let m = spec.margin();
    for &(i, j) in spec.pairs() {
        if let Some((hi, lo)) = favoured(source_row, i, j) {
            if row[hi] - row[lo] < m {
                out[hi] -= 1.0;
                out[lo] += 1.0;
            }
        }
    }
}

#[inline]
fn td_target(tp: &TransitionTuple, later: &ValueTable, gamma: f64) -> f64 {
    gamma.powi(tp.duration() as i32) * later.get(tp.finish.t, tp.finish.cell) + tp.reward
}

/// Squared TD error of `row` over `tuples` (all starting at the same time
/// step) against the fixed later values, plus `lambda` times the hinge
/// penalty. Evaluated term by term.
pub fn penalized_objective(
    row: &[f64],
    tuples: &[TransitionTuple],
    later: &ValueTable,
    source_row: &[f64],
    spec: &ConcordanceSpec,
    gamma: f64,
) -> f64 {
    let squared: f64 = tuples
        .iter()
        .map(|tp| {
            let e = row[tp.start.cell] - td_target(tp, later, gamma);
            e * e
        })
        .sum();
    squared + spec.lambda() * hinge_penalty(row, source_row, spec)
}

/// A subgradient of [`penalized_objective`]; the gradient wherever no pair
/// sits exactly on its margin.
pub fn objective_gradient(
    row: &[f64],
    tuples: &[TransitionTuple],
    later: &ValueTable,
    source_row: &[f64],
    spec: &ConcordanceSpec,
    gamma: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; row.len()];
    for tp in tuples {
        grad[tp.start.cell] += 2.0 * (row[tp.start.cell] - td_target(tp, later, gamma));
    }
    if spec.lambda() > 0.0 {
        let mut hinge = vec![0.0; row.len()];
        hinge_subgradient(row, source_row, spec, &mut hinge);
        for (g, h) in grad.iter_mut().zip(hinge) {
            *g += spec.lambda() * h;
        }
    }
    grad
}

/// Sufficient statistics of one time step's TD targets, per cell: the count,
/// the mean and the centred sum of squares. The squared-error term becomes
/// `sum_i count_i (v_i - mean_i)^2 + m2_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepProblem {
    pub(crate) t: usize,
    pub(crate) count: Vec<u32>,
    pub(crate) mean: Vec<f64>,
    pub(crate) m2: Vec<f64>,
}

impl StepProblem {
    /// Statistics for `t` from an indexed buffer. Each cell's mean is summed
    /// in buffer order and divided once, exactly as the DP backup does.
    pub fn from_buffer(buffer: &IndexedBuffer, t: usize, later: &ValueTable, gamma: f64) -> Self {
        let n = buffer.n_cells();
        let mut targets = Vec::new();
        let mut problem = Self::empty(t, n);
        for cell in 0..n {
            targets.clear();
            targets.extend(
                buffer
                    .index()
                    .by_state(t, cell)
                    .iter()
                    .map(|&j| buffer.target(j as usize, later, gamma)),
            );
            problem.fill(cell, &targets);
        }
        problem
    }

    /// Statistics from tuples that all start at `t`.
    pub fn from_tuples(
        t: usize,
        n_cells: usize,
        tuples: &[TransitionTuple],
        later: &ValueTable,
        gamma: f64,
    ) -> Self {
        let mut grouped = vec![Vec::new(); n_cells];
        for tp in tuples {
            debug_assert_eq!(tp.start.t, t);
            grouped[tp.start.cell].push(td_target(tp, later, gamma));
        }
        let mut problem = Self::empty(t, n_cells);
        for (cell, targets) in grouped.iter().enumerate() {
            problem.fill(cell, targets);
        }
        problem
    }

    fn empty(t: usize, n: usize) -> Self {
        Self {
            t,
            count: vec![0; n],
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    fn fill(&mut self, cell: usize, targets: &[f64]) {
        if targets.is_empty() {
            return;
        }
        let mut sum = 0.0;
        for y in targets {
            sum += y;
        }
        let mean = sum / targets.len() as f64;
        self.count[cell] = targets.len() as u32;
        self.mean[cell] = mean;
        self.m2[cell] = targets.iter().map(|y| (y - mean) * (y - mean)).sum();
    }

    pub fn n_cells(&self) -> usize {
        self.count.len()
    }

    pub fn has_data(&self) -> bool {
        self.count.iter().any(|&c| c > 0)
    }

    /// Per-cell minimiser of the unpenalized problem; cells without data are `None`.
    pub fn means(&self) -> Vec<Option<f64>> {
        self.count
            .iter()
            .zip(&self.mean)
            .map(|(&c, &m)| (c > 0).then_some(m))
            .collect()
    }

    /// The penalized objective through the sufficient statistics.
    pub fn objective(&self, row: &[f64], source_row: &[f64], spec: &ConcordanceSpec) -> f64 {
        let mut total = 0.0;
        for (((&v, &c), &mean), &m2) in row.iter().zip(&self.count).zip(&self.mean).zip(&self.m2) {
            if c > 0 {
                let d = v - mean;
                total += c as f64 * d * d + m2;
            }
        }
        if spec.lambda() > 0.0 {
            total += spec.lambda() * hinge_penalty(row, source_row, spec);
        }
        total
    }
}
