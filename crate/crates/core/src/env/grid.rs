use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-discretized spatial world: `n_cells` opaque cells, `horizon` steps,
/// and a full travel-time table in whole steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorld {
    n_cells: usize,
    horizon: usize,
    travel: Vec<u32>,
    tags: Vec<Option<String>>,
}

impl GridWorld {
    pub fn new(n_cells: usize, horizon: usize, travel: Vec<u32>) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::domain(format!(
                "n_cells must be >= 2, got {n_cells}"
            )));
        }
        if horizon < 2 {
            return Err(Error::domain(format!(
                "horizon must be >= 2, got {horizon}"
            )));
        }
        if travel.len() != n_cells * n_cells {
            return Err(Error::ShapeMismatch {
                expected: format!("{n_cells}x{n_cells} travel table"),
                found: format!("{} entries", travel.len()),
            });
        }
        if let Some(pos) = travel.iter().position(|&d| d == 0) {
            return Err(Error::domain(format!(
                "travel time from {} to {} must be >= 1",
                pos / n_cells,
                pos % n_cells
            )));
        }
        Ok(Self {
            n_cells,
            horizon,
            travel,
            tags: vec![None; n_cells],
        })
    }

    /// Row-major `width x height` lattice; travel time is the L1 distance
    /// divided by `cells_per_step`, rounded up, and never below one step.
    pub fn lattice(
        width: usize,
        height: usize,
        horizon: usize,
        cells_per_step: f64,
    ) -> Result<Self> {
        if !(cells_per_step.is_finite() && cells_per_step > 0.0) {
            return Err(Error::domain("cells_per_step must be positive"));
        }
        let n = width * height;
        let mut travel = Vec::with_capacity(n * n);
        for a in 0..n {
            let (ax, ay) = (a % width, a / width);
            for b in 0..n {
                let (bx, by) = (b % width, b / width);
                let l1 = ax.abs_diff(bx) + ay.abs_diff(by);
                let steps = (l1 as f64 / cells_per_step).ceil() as u32;
                travel.push(steps.max(1));
            }
        }
        Self::new(n, horizon, travel)
    }

    pub fn with_tags(mut self, tags: Vec<Option<String>>) -> Result<Self> {
        if tags.len() != self.n_cells {
            return Err(Error::ShapeMismatch {
                expected: format!("{} cell tags", self.n_cells),
                found: tags.len().to_string(),
            });
        }
        self.tags = tags;
        Ok(self)
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn travel_time(&self, from: usize, to: usize) -> u32 {
        self.travel[from * self.n_cells + to]
    }

    /// Time for an idle driver to reach an order's origin. Zero inside the same cell.
    #[inline]
    pub fn pickup_time(&self, from: usize, to: usize) -> u32 {
        if from == to {
            0
        } else {
            self.travel_time(from, to)
        }
    }

    pub fn tag(&self, cell: usize) -> Option<&str> {
        self.tags.get(cell).and_then(|t| t.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_uses_l1_distance() {
        let w = GridWorld::lattice(3, 2, 10, 1.0).unwrap();
        assert_eq!(w.n_cells(), 6);
        assert_eq!(w.travel_time(0, 5), 3);
        assert_eq!(w.travel_time(4, 4), 1);
        assert_eq!(w.pickup_time(4, 4), 0);
        let fast = GridWorld::lattice(3, 2, 10, 2.0).unwrap();
        assert_eq!(fast.travel_time(0, 5), 2);
        assert_eq!(fast.travel_time(0, 1), 1);
    }

    #[test]
    fn rejects_degenerate_worlds() {
        assert!(GridWorld::new(1, 5, vec![1]).is_err());
        assert!(GridWorld::new(2, 1, vec![1; 4]).is_err());
        assert!(GridWorld::new(2, 5, vec![1, 1, 0, 1]).is_err());
        assert!(GridWorld::new(2, 5, vec![1; 3]).is_err());
    }
}
