use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    Action, DemandModel, DriverId, DriverSlot, GridWorld, OrderRequest, State, TransitionTuple,
};
use crate::error::{Error, Result};
use crate::valuation::installment_reward;

/// Where and when a driver ends up after serving an order, and what it earns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOutcome {
    pub pickup: u32,
    pub finish: State,
    pub reward: f64,
}

/// Serving `order` from `from`: pickup travel, then the on-trip duration,
/// truncated at the horizon. Only installments paid before the horizon count.
/// `None` when the trip cannot start before the horizon.
pub fn serve_outcome(
    world: &GridWorld,
    from: State,
    order: &OrderRequest,
    gamma: f64,
) -> Option<ServeOutcome> {
    let horizon = world.horizon();
    let pickup = world.pickup_time(from.cell, order.origin);
    let trip_start = from.t + pickup as usize;
    if trip_start >= horizon {
        return None;
    }
    let finish_t = (trip_start + order.duration as usize).min(horizon);
    let paid = (finish_t - trip_start) as u32;
    Some(ServeOutcome {
        pickup,
        finish: State::new(finish_t, order.destination),
        reward: installment_reward(order.revenue, order.duration, paid, gamma),
    })
}

#[derive(Debug, Clone)]
pub enum Assignment {
    Serve(OrderRequest),
    Idle,
}

/// Per-day counters. Rates follow the convention that an empty denominator
/// yields 1.0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub reward: f64,
    pub orders_created: u64,
    pub orders_answered: u64,
    pub orders_completed: u64,
}

impl DayMetrics {
    pub fn answer_rate(&self) -> f64 {
        if self.orders_created == 0 {
            1.0
        } else {
            self.orders_answered as f64 / self.orders_created as f64
        }
    }

    pub fn completion_rate(&self) -> f64 {
        if self.orders_answered == 0 {
            1.0
        } else {
            self.orders_completed as f64 / self.orders_answered as f64
        }
    }
}

/// Chooses, per window, which order (if any) each idle driver serves.
pub trait DispatchPolicy {
    /// One entry per driver, holding an index into `orders`.
    fn assign(
        &mut self,
        t: usize,
        drivers: &[DriverSlot],
        orders: &[OrderRequest],
    ) -> Result<Vec<Option<usize>>>;
}

impl<F> DispatchPolicy for F
where
    F: FnMut(usize, &[DriverSlot], &[OrderRequest]) -> Result<Vec<Option<usize>>>,
{
    fn assign(
        &mut self,
        t: usize,
        drivers: &[DriverSlot],
        orders: &[OrderRequest],
    ) -> Result<Vec<Option<usize>>> {
        self(t, drivers, orders)
    }
}

#[derive(Debug, Clone, Copy)]
struct Driver {
    cell: usize,
    free_at: usize,
}

/// Mutable state of one simulated day.
///
/// A driver is eligible in window `t` only if it is idle at the window start,
/// i.e. its previous action finished exactly at `t`.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    world: &'a GridWorld,
    model: &'a DemandModel,
    gamma: f64,
    drivers: Vec<Driver>,
    next_order_id: u64,
    metrics: DayMetrics,
}

impl<'a> Episode<'a> {
    pub fn new(world: &'a GridWorld, model: &'a DemandModel, gamma: f64) -> Self {
        let drivers = model
            .initial_drivers()
            .iter()
            .enumerate()
            .flat_map(|(cell, &count)| (0..count).map(move |_| Driver { cell, free_at: 0 }))
            .collect();
        Self {
            world,
            model,
            gamma,
            drivers,
            next_order_id: 0,
            metrics: DayMetrics::default(),
        }
    }

    pub fn metrics(&self) -> DayMetrics {
        self.metrics
    }

    pub fn n_drivers(&self) -> usize {
        self.drivers.len()
    }

    pub fn idle_drivers(&self, t: usize) -> Vec<DriverSlot> {
        self.drivers
            .iter()
            .enumerate()
            .filter(|(_, d)| d.free_at == t)
            .map(|(id, d)| DriverSlot {
                driver_id: DriverId(id as u32),
                state: State::new(t, d.cell),
            })
            .collect()
    }

    /// Orders created in window `t` and the drivers idle at its start.
    pub fn generate_window(
        &mut self,
        t: usize,
        rng: &mut impl Rng,
    ) -> (Vec<OrderRequest>, Vec<DriverSlot>) {
        assert!(t < self.world.horizon(), "window {t} outside horizon");
        let orders = self
            .model
            .generate_orders(self.world, t, &mut self.next_order_id, rng);
        self.metrics.orders_created += orders.len() as u64;
        (orders, self.idle_drivers(t))
    }

    /// Executes one window's decisions. The whole batch is validated before any
    /// driver moves, so a rejected batch leaves the episode untouched.
    pub fn apply_matching(
        &mut self,
        assignments: &[(DriverId, Assignment)],
        t: usize,
    ) -> Result<Vec<TransitionTuple>> {
        let horizon = self.world.horizon();
        if t >= horizon {
            return Err(Error::domain(format!(
                "window {t} outside horizon {horizon}"
            )));
        }
        let mut seen_driver = vec![false; self.drivers.len()];
        let mut seen_orders = Vec::new();
        for (id, assignment) in assignments {
            let idx = id.0 as usize;
            let driver = self
                .drivers
                .get(idx)
                .ok_or_else(|| Error::ConstraintViolation(format!("unknown driver {}", id.0)))?;
            if std::mem::replace(&mut seen_driver[idx], true) {
                return Err(Error::ConstraintViolation(format!(
                    "driver {} assigned twice",
                    id.0
                )));
            }
            if driver.free_at != t {
                return Err(Error::ConstraintViolation(format!(
                    "driver {} is not idle at {t}",
                    id.0
                )));
            }
            if let Assignment::Serve(order) = assignment {
                if seen_orders.contains(&order.id) {
                    return Err(Error::ConstraintViolation(format!(
                        "order {} assigned twice",
                        order.id.0
                    )));
                }
                seen_orders.push(order.id);
                if serve_outcome(self.world, State::new(t, driver.cell), order, self.gamma)
                    .is_none()
                {
                    return Err(Error::ConstraintViolation(format!(
                        "order {} cannot start before the horizon",
                        order.id.0
                    )));
                }
            }
        }

        let mut tuples = Vec::with_capacity(assignments.len());
        for (id, assignment) in assignments {
            let driver = &mut self.drivers[id.0 as usize];
            let start = State::new(t, driver.cell);
            let tuple = match assignment {
                Assignment::Idle => TransitionTuple {
                    start,
                    action: Action::Idle,
                    reward: 0.0,
                    finish: State::new(t + 1, driver.cell),
                },
                Assignment::Serve(order) => {
                    let outcome = serve_outcome(self.world, start, order, self.gamma)
                        .expect("validated above");
                    let keep =
                        (1.0 - self.model.cancellation() * outcome.pickup as f64).clamp(0.0, 1.0);
                    let completed = order.patience_draw < keep;
                    self.metrics.orders_answered += 1;
                    if completed {
                        self.metrics.orders_completed += 1;
                        self.metrics.reward += outcome.reward;
                        TransitionTuple {
                            start,
                            action: Action::Serve {
                                order: order.id,
                                completed,
                            },
                            reward: outcome.reward,
                            finish: outcome.finish,
                        }
                    } else {
                        // the passenger is gone by the time the driver reaches the origin
                        let reach = (t + outcome.pickup.max(1) as usize).min(horizon);
                        TransitionTuple {
                            start,
                            action: Action::Serve {
                                order: order.id,
                                completed,
                            },
                            reward: 0.0,
                            finish: State::new(reach, order.origin),
                        }
                    }
                }
            };
            driver.cell = tuple.finish.cell;
            driver.free_at = tuple.finish.t;
            tuples.push(tuple);
        }
        Ok(tuples)
    }
}

#[derive(Debug, Clone)]
pub struct DayOutcome {
    pub tuples: Vec<TransitionTuple>,
    pub metrics: DayMetrics,
}

/// Simulates windows `0..horizon`. Drivers the policy leaves unassigned idle
/// for one step. Unserved orders expire at the end of their window.
pub fn run_day(
    world: &GridWorld,
    model: &DemandModel,
    policy: &mut dyn DispatchPolicy,
    gamma: f64,
    rng: &mut impl Rng,
) -> Result<DayOutcome> {
    let mut episode = Episode::new(world, model, gamma);
    let mut tuples = Vec::new();
    for t in 0..world.horizon() {
        let (orders, drivers) = episode.generate_window(t, rng);
        let choice = if drivers.is_empty() {
            Vec::new()
        } else {
            policy.assign(t, &drivers, &orders)?
        };
        if choice.len() != drivers.len() {
            return Err(Error::ConstraintViolation(format!(
                "policy returned {} decisions for {} drivers",
                choice.len(),
                drivers.len()
            )));
        }
        let assignments = drivers
            .iter()
            .zip(&choice)
            .map(|(d, c)| match c {
                Some(k) => orders
                    .get(*k)
                    .map(|o| (d.driver_id, Assignment::Serve(o.clone())))
                    .ok_or_else(|| {
                        Error::ConstraintViolation(format!("order index {k} out of range"))
                    }),
                None => Ok((d.driver_id, Assignment::Idle)),
            })
            .collect::<Result<Vec<_>>>()?;
        tuples.extend(episode.apply_matching(&assignments, t)?);
    }
    Ok(DayOutcome {
        tuples,
        metrics: episode.metrics(),
    })
}
