//! Synthetic semi-Markov dispatch environment.
//!
//! A day is `horizon` dispatch windows. In every window the demand model
//! emits Poisson order arrivals per cell, the drivers that are idle at the
//! window start are offered to a [`DispatchPolicy`], and the resulting
//! matching is executed into [`TransitionTuple`]s.

mod demand;
mod grid;
mod sim;

pub use demand::{Arrivals, DemandModel, RevenueModel};
pub use grid::GridWorld;
pub use sim::{
    run_day, serve_outcome, Assignment, DayMetrics, DayOutcome, DispatchPolicy, Episode,
    ServeOutcome,
};

use serde::{Deserialize, Serialize};

/// A (time index, cell index) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub t: usize,
    pub cell: usize,
}

impl State {
    #[inline]
    pub const fn new(t: usize, cell: usize) -> Self {
        Self { t, cell }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DriverId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrderId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRequest {
    pub id: OrderId,
    pub origin: usize,
    pub destination: usize,
    pub revenue: f64,
    /// On-trip duration in steps, `travel_time(origin, destination)`.
    pub duration: u32,
    pub created_at: usize,
    /// Uniform draw in [0, 1) fixed at creation; the order completes when it
    /// falls below the completion probability implied by the pickup wait.
    pub patience_draw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverSlot {
    pub driver_id: DriverId,
    pub state: State,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Idle,
    /// `completed` is false when the passenger cancelled during pickup.
    Serve {
        order: OrderId,
        completed: bool,
    },
}

/// One driver decision and its outcome.
///
/// The duration of a served order includes pickup travel; the discounted
/// reward only spans the on-trip installments inside the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionTuple {
    pub start: State,
    pub action: Action,
    pub reward: f64,
    pub finish: State,
}

impl TransitionTuple {
    #[inline]
    pub fn duration(&self) -> usize {
        self.finish.t - self.start.t
    }
}
