use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{GridWorld, OrderId, OrderRequest};
use crate::error::{Error, Result};

/// Revenue of an order from `origin` with on-trip duration `d`:
/// `(base[origin] + per_step * d) * (1 + noise * u)`, `u ~ U(-1, 1)`, floored at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevenueModel {
    pub base: Vec<f64>,
    pub per_step: f64,
    pub noise: f64,
}

/// How a window's order count is drawn from its rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arrivals {
    #[default]
    Poisson,
    /// Exactly `rate` orders; rates must be whole numbers.
    Fixed,
}

/// Order arrivals, destinations, revenue, initial fleet and cancellation for
/// one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandModel {
    horizon: usize,
    n_cells: usize,
    /// Poisson intensity per (window, cell), row-major `horizon x n_cells`.
    rates: Vec<f64>,
    /// Row-stochastic `n_cells x n_cells` destination matrix.
    destinations: Vec<f64>,
    revenue: RevenueModel,
    initial_drivers: Vec<u32>,
    cancellation: f64,
    arrivals: Arrivals,
    cumulative: Vec<f64>,
}

impl DemandModel {
    pub fn new(
        world: &GridWorld,
        rates: Vec<f64>,
        destinations: Vec<f64>,
        revenue: RevenueModel,
        initial_drivers: Vec<u32>,
        cancellation: f64,
    ) -> Result<Self> {
        let (t, n) = (world.horizon(), world.n_cells());
        if rates.len() != t * n {
            return Err(Error::ShapeMismatch {
                expected: format!("{t}x{n} rates"),
                found: format!("{} entries", rates.len()),
            });
        }
        if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::domain(format!(
                "order rates must be finite and >= 0, got {r}"
            )));
        }
        if destinations.len() != n * n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n} destination matrix"),
                found: format!("{} entries", destinations.len()),
            });
        }
        for (i, row) in destinations.chunks(n).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::domain(format!(
                    "destination row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::domain(format!(
                    "destination row {i} sums to {sum}, not 1"
                )));
            }
        }
        if revenue.base.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} revenue bases"),
                found: revenue.base.len().to_string(),
            });
        }
        if !(revenue.per_step.is_finite()
            && revenue.noise.is_finite()
            && (0.0..=1.0).contains(&revenue.noise))
        {
            return Err(Error::domain(
                "revenue per_step must be finite and noise in [0, 1]",
            ));
        }
        if revenue.base.iter().any(|b| !b.is_finite()) {
            return Err(Error::domain("revenue base must be finite"));
        }
        if initial_drivers.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} driver counts"),
                found: initial_drivers.len().to_string(),
            });
        }
        if !(cancellation.is_finite() && cancellation >= 0.0) {
            return Err(Error::domain(format!(
                "cancellation must be >= 0, got {cancellation}"
            )));
        }
        let mut model = Self {
            horizon: t,
            n_cells: n,
            rates,
            destinations,
            revenue,
            initial_drivers,
            cancellation,
            arrivals: Arrivals::Poisson,
            cumulative: Vec::new(),
        };
        model.rebuild_cumulative();
        Ok(model)
    }

    fn rebuild_cumulative(&mut self) {
        self.cumulative = self
            .destinations
            .chunks(self.n_cells)
            .flat_map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(move |p| {
                        acc += p;
                        acc
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }

    #[inline]
    pub fn rate(&self, t: usize, cell: usize) -> f64 {
        self.rates[t * self.n_cells + cell]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn destination_row(&self, origin: usize) -> &[f64] {
        &self.destinations[origin * self.n_cells..(origin + 1) * self.n_cells]
    }

    pub fn revenue(&self) -> &RevenueModel {
        &self.revenue
    }

    pub fn initial_drivers(&self) -> &[u32] {
        &self.initial_drivers
    }

    pub fn cancellation(&self) -> f64 {
        self.cancellation
    }

    pub fn arrivals(&self) -> Arrivals {
        self.arrivals
    }

    pub fn with_arrivals(mut self, arrivals: Arrivals) -> Result<Self> {
        if arrivals == Arrivals::Fixed {
            if let Some(r) = self.rates.iter().find(|r| r.fract() != 0.0) {
                return Err(Error::domain(format!(
                    "fixed arrivals need whole-number rates, got {r}"
                )));
            }
        }
        self.arrivals = arrivals;
        Ok(self)
    }

    pub fn expected_orders_per_day(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Same model with every arrival rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::domain("rate scale must be >= 0"));
        }
        let mut out = self.clone();
        out.rates.iter_mut().for_each(|r| *r *= factor);
        let arrivals = out.arrivals;
        out.with_arrivals(arrivals)
    }

    pub fn with_initial_drivers(mut self, drivers: Vec<u32>) -> Result<Self> {
        if drivers.len() != self.n_cells {
            return Err(Error::ShapeMismatch {
                expected: format!("{} driver counts", self.n_cells),
                found: drivers.len().to_string(),
            });
        }
        self.initial_drivers = drivers;
        Ok(self)
    }

    /// Same model with the daily rate profile delayed by `shift` windows,
    /// wrapping around the end of the day.
    pub fn time_shifted(&self, shift: usize) -> Self {
        let (t, n) = (self.horizon, self.n_cells);
        let mut out = self.clone();
        for w in 0..t {
            let from = (w + t - shift % t) % t;
            out.rates[w * n..(w + 1) * n].copy_from_slice(&self.rates[from * n..(from + 1) * n]);
        }
        out
    }

    fn sample_destination(&self, origin: usize, rng: &mut impl Rng) -> usize {
        let row = &self.cumulative[origin * self.n_cells..(origin + 1) * self.n_cells];
        let u: f64 = rng.random::<f64>() * row[self.n_cells - 1];
        row.partition_point(|&c| c <= u).min(self.n_cells - 1)
    }

    /// Draws the orders created in window `t`. Cells are visited in index order
    /// and ids continue from `next_id`, so the output is a pure function of the
    /// generator state.
    pub fn generate_orders(
        &self,
        world: &GridWorld,
        t: usize,
        next_id: &mut u64,
        rng: &mut impl Rng,
    ) -> Vec<OrderRequest> {
        debug_assert!(t < self.horizon);
        let mut orders = Vec::new();
        for origin in 0..self.n_cells {
            let rate = self.rate(t, origin);
            if rate <= 0.0 {
                continue;
            }
            let count = match self.arrivals {
                // rate is finite and positive, so the distribution is well formed
                Arrivals::Poisson => Poisson::new(rate).expect("positive rate").sample(rng) as u64,
                Arrivals::Fixed => rate as u64,
            };
            for _ in 0..count {
                let destination = self.sample_destination(origin, rng);
                let duration = world.travel_time(origin, destination);
                let jitter = 1.0 + self.revenue.noise * (2.0 * rng.random::<f64>() - 1.0);
                let revenue = ((self.revenue.base[origin]
                    + self.revenue.per_step * duration as f64)
                    * jitter)
                    .max(0.0);
                let patience_draw = rng.random::<f64>();
                orders.push(OrderRequest {
                    id: OrderId(*next_id),
                    origin,
                    destination,
                    revenue,
                    duration,
                    created_at: t,
                    patience_draw,
                });
                *next_id += 1;
            }
        }
        orders
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_cell(rates: [f64; 2]) -> (GridWorld, DemandModel) {
        let world = GridWorld::new(2, 4, vec![1, 2, 2, 1]).unwrap();
        let model = DemandModel::new(
            &world,
            rates.iter().copied().cycle().take(8).collect(),
            vec![0.0, 1.0, 1.0, 0.0],
            RevenueModel {
                base: vec![1.0, 1.0],
                per_step: 2.0,
                noise: 0.0,
            },
            vec![1, 1],
            0.0,
        )
        .unwrap();
        (world, model)
    }

    #[test]
    fn fixed_arrivals_emit_exact_counts() {
        let (world, model) = two_cell([2.0, 0.0]);
        let model = model.with_arrivals(Arrivals::Fixed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut next = 0;
        for t in 0..4 {
            let orders = model.generate_orders(&world, t, &mut next, &mut rng);
            assert_eq!(orders.len(), 2);
            assert!(orders.iter().all(|o| o.origin == 0 && o.destination == 1));
        }
        assert!(model.scaled(0.25).is_err());
        let (_, fractional) = two_cell([0.5, 0.0]);
        assert!(fractional.with_arrivals(Arrivals::Fixed).is_err());
    }

    #[test]
    fn time_shift_wraps_and_keeps_totals() {
        let world = GridWorld::new(2, 3, vec![1, 1, 1, 1]).unwrap();
        let model = DemandModel::new(
            &world,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![0.5, 0.5, 0.5, 0.5],
            RevenueModel {
                base: vec![1.0, 1.0],
                per_step: 0.0,
                noise: 0.0,
            },
            vec![0, 0],
            0.0,
        )
        .unwrap();
        let shifted = model.time_shifted(1);
        assert_eq!(shifted.rates(), &[5.0, 6.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(model.time_shifted(3).rates(), model.rates());
        assert_eq!(
            shifted.expected_orders_per_day(),
            model.expected_orders_per_day()
        );
    }

    #[test]
    fn zero_intensity_generates_nothing() {
        let (world, model) = two_cell([0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut id = 0;
        for t in 0..4 {
            assert!(model
                .generate_orders(&world, t, &mut id, &mut rng)
                .is_empty());
        }
    }

    #[test]
    fn orders_follow_destination_row_and_travel_time() {
        let (world, model) = two_cell([3.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut id = 0;
        let orders = model.generate_orders(&world, 0, &mut id, &mut rng);
        assert!(!orders.is_empty());
        for o in &orders {
            assert_eq!((o.origin, o.destination, o.duration), (0, 1, 2));
            assert_eq!(o.revenue, 5.0);
        }
        assert_eq!(id as usize, orders.len());
    }

    #[test]
    fn rejects_non_stochastic_destinations() {
        let world = GridWorld::new(2, 4, vec![1; 4]).unwrap();
        let err = DemandModel::new(
            &world,
            vec![0.0; 8],
            vec![0.5, 0.4, 0.0, 1.0],
            RevenueModel {
                base: vec![0.0; 2],
                per_step: 1.0,
                noise: 0.0,
            },
            vec![0, 0],
            0.0,
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }
}
