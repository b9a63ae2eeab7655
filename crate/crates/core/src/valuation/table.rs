use serde::{Deserialize, Serialize};

use crate::env::TransitionTuple;
use crate::error::{Error, Result};

/// Dense `(horizon + 1) x n_cells` table of state values. Row `horizon` is the
/// terminal boundary and always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    horizon: usize,
    n_cells: usize,
    gamma: f64,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(horizon: usize, n_cells: usize, gamma: f64) -> Self {
        Self {
            horizon,
            n_cells,
            gamma,
            values: vec![0.0; (horizon + 1) * n_cells],
        }
    }

    /// Builds a table from its rows `0..horizon`; the terminal row is appended.
    pub fn from_rows(n_cells: usize, gamma: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let horizon = rows.len();
        let mut table = Self::zeros(horizon, n_cells, gamma);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n_cells {
                return Err(Error::ShapeMismatch {
                    expected: format!("{n_cells} values in row {t}"),
                    found: row.len().to_string(),
                });
            }
            table.row_mut(t).copy_from_slice(row);
        }
        Ok(table)
    }

    pub(crate) fn from_raw(
        horizon: usize,
        n_cells: usize,
        gamma: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != (horizon + 1) * n_cells {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", (horizon + 1) * n_cells),
                found: values.len().to_string(),
            });
        }
        if values[horizon * n_cells..].iter().any(|&v| v != 0.0) {
            return Err(Error::domain("terminal row of a value table must be zero"));
        }
        Ok(Self {
            horizon,
            n_cells,
            gamma,
            values,
        })
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub(crate) fn set_gamma(&mut self, gamma: f64) {
        self.gamma = gamma;
    }

    #[inline]
    pub fn get(&self, t: usize, cell: usize) -> f64 {
        self.values[t * self.n_cells + cell]
    }

    /// Panics on the terminal row, which is fixed at zero.
    #[inline]
    pub fn set(&mut self, t: usize, cell: usize, value: f64) {
        assert!(t < self.horizon, "row {t} is terminal or out of range");
        self.values[t * self.n_cells + cell] = value;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_cells..(t + 1) * self.n_cells]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        assert!(t < self.horizon, "row {t} is terminal or out of range");
        &mut self.values[t * self.n_cells..(t + 1) * self.n_cells]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn check_shape(&self, horizon: usize, n_cells: usize) -> Result<()> {
        if self.horizon != horizon || self.n_cells != n_cells {
            return Err(Error::ShapeMismatch {
                expected: format!("{horizon}x{n_cells} table"),
                found: format!("{}x{}", self.horizon, self.n_cells),
            });
        }
        Ok(())
    }

    /// Largest absolute entrywise difference.
    pub fn sup_distance(&self, other: &ValueTable) -> Result<f64> {
        other.check_shape(self.horizon, self.n_cells)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Mean of each cell's values over the non-terminal rows.
    pub fn time_average(&self) -> Vec<f64> {
        let mut avg = vec![0.0; self.n_cells];
        for t in 0..self.horizon {
            for (a, v) in avg.iter_mut().zip(self.row(t)) {
                *a += v;
            }
        }
        avg.iter_mut().for_each(|a| *a /= self.horizon as f64);
        avg
    }
}

/// Tuple ids grouped by start state, stored compactly: ids for `(t, cell)`
/// occupy one contiguous run, and the runs for a fixed `t` are adjacent.
#[derive(Debug, Clone)]
pub struct TupleIndex {
    n_cells: usize,
    offsets: Vec<usize>,
    ids: Vec<u32>,
}

impl TupleIndex {
    pub fn build(tuples: &[TransitionTuple], horizon: usize, n_cells: usize) -> Self {
        let slots = horizon * n_cells;
        let mut offsets = vec![0usize; slots + 1];
        for tp in tuples {
            offsets[tp.start.t * n_cells + tp.start.cell + 1] += 1;
        }
        for s in 0..slots {
            offsets[s + 1] += offsets[s];
        }
        let mut fill = offsets.clone();
        let mut ids = vec![0u32; tuples.len()];
        for (j, tp) in tuples.iter().enumerate() {
            let slot = tp.start.t * n_cells + tp.start.cell;
            ids[fill[slot]] = j as u32;
            fill[slot] += 1;
        }
        Self {
            n_cells,
            offsets,
            ids,
        }
    }

    /// Ids of tuples starting at `(t, cell)`, in buffer order.
    pub fn by_state(&self, t: usize, cell: usize) -> &[u32] {
        let s = t * self.n_cells + cell;
        &self.ids[self.offsets[s]..self.offsets[s + 1]]
    }

    /// Ids of all tuples starting at time `t`, grouped by cell.
    pub fn by_time(&self, t: usize) -> &[u32] {
        &self.ids[self.offsets[t * self.n_cells]..self.offsets[(t + 1) * self.n_cells]]
    }
}

/// Validated transition tuples plus their start-state index.
#[derive(Debug, Clone)]
pub struct IndexedBuffer {
    horizon: usize,
    n_cells: usize,
    tuples: Vec<TransitionTuple>,
    index: TupleIndex,
}

impl IndexedBuffer {
    pub fn new(tuples: Vec<TransitionTuple>, horizon: usize, n_cells: usize) -> Result<Self> {
        for (j, tp) in tuples.iter().enumerate() {
            let ok = tp.start.t < tp.finish.t
                && tp.finish.t <= horizon
                && tp.start.cell < n_cells
                && tp.finish.cell < n_cells
                && tp.reward.is_finite();
            if !ok {
                return Err(Error::domain(format!(
                    "tuple {j} ({:?} -> {:?}) does not fit a {horizon}x{n_cells} world",
                    tp.start, tp.finish
                )));
            }
        }
        let index = TupleIndex::build(&tuples, horizon, n_cells);
        Ok(Self {
            horizon,
            n_cells,
            tuples,
            index,
        })
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn tuples(&self) -> &[TransitionTuple] {
        &self.tuples
    }

    pub fn index(&self) -> &TupleIndex {
        &self.index
    }

    /// TD target of tuple `j` against the later rows of `table`.
    #[inline]
    pub(crate) fn target(&self, j: usize, table: &ValueTable, gamma: f64) -> f64 {
        let tp = &self.tuples[j];
        gamma.powi(tp.duration() as i32) * table.get(tp.finish.t, tp.finish.cell) + tp.reward
    }
}
