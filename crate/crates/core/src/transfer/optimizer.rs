use serde::{Deserialize, Serialize};

use super::objective::hinge_subgradient;
use super::{ConcordanceSpec, StepProblem};
use crate::error::{Error, Result};
use crate::valuation::{start_table, IndexedBuffer, ValueTable};

/// Diminishing-step subgradient descent settings. Step `k` (from 1) is
/// `alpha0 / sqrt(k)`. The run stops after `max_iters` steps, or once the best
/// objective improved by less than `tol * (1 + |best|)` over the last
/// `patience` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub alpha0: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub patience: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            max_iters: 400,
            tol: 1e-10,
            patience: 100,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return Err(Error::domain(format!(
                "alpha0 must be positive, got {}",
                self.alpha0
            )));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::domain("tol must be finite and >= 0"));
        }
        if self.patience == 0 {
            return Err(Error::domain("patience must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    /// Best iterate seen.
    pub row: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Best objective so far, after each iteration; entry 0 is the start point.
    pub trace: Vec<f64>,
}

/// Minimises one time step's penalized objective from `init`.
///
/// Steps are diagonally preconditioned. Cell `i` with `c_i` tuples and `d_i`
/// active pairs uses scale `1 / (2 c_i + lambda d_i / margin)`, so without
/// pairs step `k` moves a value the fraction `alpha_k` of the way to its
/// target mean, and the penalty alone moves it by at most `alpha_k * margin`.
/// With `alpha0 = 1` and no active pairs the first step lands on the means.
pub fn solve_time_step(
    problem: &StepProblem,
    init: &[f64],
    source_row: &[f64],
    spec: &ConcordanceSpec,
    opt: &OptimizerSettings,
) -> Result<SolveOutcome> {
    let n = problem.n_cells();
    if init.len() != n || source_row.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("rows of {n} cells"),
            found: format!("init {}, source {}", init.len(), source_row.len()),
        });
    }
    opt.validate()?;
    spec.check_cells(n)?;

    let lambda = spec.lambda();
    let penalized = spec.is_active();
    let mut row = init.to_vec();
    let mut best = row.clone();
    let mut best_obj = problem.objective(&row, source_row, spec);
    if !best_obj.is_finite() {
        return Err(numerical(problem.t, 0, 0.0, best_obj));
    }
    let mut trace = Vec::with_capacity(opt.max_iters.min(4096) + 1);
    trace.push(best_obj);
    let mut hinge = vec![0.0; n];
    let mut scale = vec![0.0; n];
    if penalized {
        for &(i, j) in spec.pairs() {
            scale[i] += lambda / spec.margin();
            scale[j] += lambda / spec.margin();
        }
        for (s, &c) in scale.iter_mut().zip(&problem.count) {
            *s += 2.0 * c as f64;
        }
    }
    let mut iterations = 0;

    for k in 1..=opt.max_iters {
        let alpha = opt.alpha0 / (k as f64).sqrt();
        if penalized {
            hinge.iter_mut().for_each(|g| *g = 0.0);
            hinge_subgradient(&row, source_row, spec, &mut hinge);
        }
        for i in 0..n {
            let c = problem.count[i];
            if !penalized {
                if c > 0 {
                    row[i] = (1.0 - alpha) * row[i] + alpha * problem.mean[i];
                }
            } else if scale[i] > 0.0 {
                let pull = alpha * 2.0 * c as f64 / scale[i];
                let mean = if c > 0 { problem.mean[i] } else { 0.0 };
                row[i] = (1.0 - pull) * row[i] + pull * mean - alpha * lambda * hinge[i] / scale[i];
            }
        }
        let obj = problem.objective(&row, source_row, spec);
        if !obj.is_finite() {
            return Err(numerical(problem.t, k, alpha, obj));
        }
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&row);
        }
        trace.push(best_obj);
        iterations = k;
        if k >= opt.patience
            && trace[k - opt.patience] - best_obj < opt.tol * (1.0 + best_obj.abs())
        {
            break;
        }
    }

    Ok(SolveOutcome {
        row: best,
        objective: best_obj,
        iterations,
        trace,
    })
}

fn numerical(t: usize, iteration: usize, step: f64, objective: f64) -> Error {
    Error::Numerical {
        t,
        iteration,
        step,
        objective,
    }
}

/// Backward pass `t = horizon-1, ..., 0`, fitting each row with
/// [`solve_time_step`] against the already fitted later rows. Each row starts
/// from `init` (or zero).
pub fn transfer_evaluate(
    buffer: &IndexedBuffer,
    source: &ValueTable,
    spec: &ConcordanceSpec,
    gamma: f64,
    opt: &OptimizerSettings,
    init: Option<&ValueTable>,
) -> Result<ValueTable> {
    source.check_shape(buffer.horizon(), buffer.n_cells())?;
    spec.check_cells(buffer.n_cells())?;
    opt.validate()?;
    let mut table = start_table(buffer, gamma, init)?;
    for t in (0..buffer.horizon()).rev() {
        let problem = StepProblem::from_buffer(buffer, t, &table, gamma);
        if !problem.has_data() && !spec.is_active() {
            continue;
        }
        let start = table.row(t).to_vec();
        let out = solve_time_step(&problem, &start, source.row(t), spec, opt)?;
        table.row_mut(t).copy_from_slice(&out.row);
    }
    Ok(table)
}
