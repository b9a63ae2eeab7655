//! Tabular state values and the baseline evaluators.

mod io;
mod table;

pub use table::{IndexedBuffer, TupleIndex, ValueTable};

use crate::env::{serve_outcome, DriverSlot, GridWorld, OrderRequest};
use crate::error::{Error, Result};
use crate::transfer::{transfer_evaluate, ConcordanceSpec, OptimizerSettings};

/// Discounted value of `revenue` paid in `duration` equal installments, one per step:
/// `sum_{u=0}^{duration-1} gamma^u * revenue / duration`.
pub fn discounted_reward(revenue: f64, duration: u32, gamma: f64) -> Result<f64> {
    if duration == 0 {
        return Err(Error::domain("order duration must be at least one step"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!(
            "gamma must be in (0, 1], got {gamma}"
        )));
    }
    Ok(installment_reward(revenue, duration, duration, gamma))
}

/// The first `paid` of `duration` installments. Used for trips cut off by the horizon.
pub(crate) fn installment_reward(revenue: f64, duration: u32, paid: u32, gamma: f64) -> f64 {
    debug_assert!(duration >= 1 && paid <= duration);
    let share = revenue / duration as f64;
    let mut weight = 1.0;
    let mut total = 0.0;
    for _ in 0..paid {
        total += weight * share;
        weight *= gamma;
    }
    total
}

/// Backward-induction estimate: each visited state takes the mean of
/// `gamma^dt * V(finish) + reward` over the tuples that start there.
/// States without tuples keep their value from `init` (zero when absent).
pub fn dp_evaluate(
    buffer: &IndexedBuffer,
    gamma: f64,
    init: Option<&ValueTable>,
) -> Result<ValueTable> {
    let mut table = start_table(buffer, gamma, init)?;
    let n = buffer.n_cells();
    for t in (0..buffer.horizon()).rev() {
        for cell in 0..n {
            let ids = buffer.index().by_state(t, cell);
            if ids.is_empty() {
                continue;
            }
            let mut sum = 0.0;
            for &j in ids {
                sum += buffer.target(j as usize, &table, gamma);
            }
            table.set(t, cell, sum / ids.len() as f64);
        }
    }
    Ok(table)
}

/// Per-step least-squares TD fit solved with the subgradient optimizer and
/// no concordance penalty. Analytically identical to [`dp_evaluate`].
pub fn td_evaluate(
    buffer: &IndexedBuffer,
    gamma: f64,
    opt: &OptimizerSettings,
    init: Option<&ValueTable>,
) -> Result<ValueTable> {
    let source = ValueTable::zeros(buffer.horizon(), buffer.n_cells(), gamma);
    transfer_evaluate(
        buffer,
        &source,
        &ConcordanceSpec::unpenalized(),
        gamma,
        opt,
        init,
    )
}

pub(crate) fn start_table(
    buffer: &IndexedBuffer,
    gamma: f64,
    init: Option<&ValueTable>,
) -> Result<ValueTable> {
    match init {
        Some(init) => {
            init.check_shape(buffer.horizon(), buffer.n_cells())?;
            let mut table = init.clone();
            table.set_gamma(gamma);
            Ok(table)
        }
        None => Ok(ValueTable::zeros(buffer.horizon(), buffer.n_cells(), gamma)),
    }
}

/// `Q(driver, order) = gamma^dt * V(finish) + r`, where `dt` includes pickup
/// travel; with no order it is the driver's own state value. An order that
/// cannot start before the horizon is worth nothing beyond that.
pub fn q_value(
    table: &ValueTable,
    world: &GridWorld,
    driver: &DriverSlot,
    order: Option<&OrderRequest>,
    gamma: f64,
) -> f64 {
    let here = table.get(driver.state.t, driver.state.cell);
    let Some(order) = order else {
        return here;
    };
    match serve_outcome(world, driver.state, order, gamma) {
        Some(out) => {
            let dt = (out.finish.t - driver.state.t) as i32;
            gamma.powi(dt) * table.get(out.finish.t, out.finish.cell) + out.reward
        }
        None => 0.0,
    }
}
