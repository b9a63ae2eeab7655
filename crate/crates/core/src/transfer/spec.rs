use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::valuation::ValueTable;

/// Pair set `E` with the penalty weight and hinge margin.
///
/// Pairs are unordered and stored as `(low index, high index)`; which cell is
/// favoured is read off the source values at each time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceSpec {
    pairs: Vec<(usize, usize)>,
    lambda: f64,
    margin: f64,
}

impl ConcordanceSpec {
    pub fn new(
        pairs: impl IntoIterator<Item = (usize, usize)>,
        lambda: f64,
        margin: f64,
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::domain(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if !(margin.is_finite() && margin > 0.0) {
            return Err(Error::domain(format!(
                "margin must be positive, got {margin}"
            )));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (a, b) in pairs {
            if a == b {
                return Err(Error::domain(format!("self pair ({a}, {a})")));
            }
            let pair = (a.min(b), a.max(b));
            if !seen.insert(pair) {
                return Err(Error::domain(format!("duplicate pair ({a}, {b})")));
            }
            out.push(pair);
        }
        Ok(Self {
            pairs: out,
            lambda,
            margin,
        })
    }

    /// No pairs, no penalty: plain least-squares TD.
    pub fn unpenalized() -> Self {
        Self {
            pairs: Vec::new(),
            lambda: 0.0,
            margin: 1.0,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.pairs.iter().copied(), lambda, self.margin)
    }

    pub(crate) fn is_active(&self) -> bool {
        self.lambda > 0.0 && !self.pairs.is_empty()
    }

    pub(crate) fn check_cells(&self, n_cells: usize) -> Result<()> {
        match self.pairs.iter().find(|(_, b)| *b >= n_cells) {
            Some(&(a, b)) => Err(Error::domain(format!(
                "pair ({a}, {b}) outside {n_cells} cells"
            ))),
            None => Ok(()),
        }
    }
}

/// Hot-versus-cold pairs: cells are ranked by time-averaged source value
/// (ties by lower index first); every cell in the top `q` fraction is paired
/// with every cell in the bottom `q` fraction.
pub fn default_pair_set(source: &ValueTable, q: f64) -> Result<Vec<(usize, usize)>> {
    if !(q > 0.0 && q <= 0.5) {
        return Err(Error::domain(format!(
            "tier fraction q must be in (0, 0.5], got {q}"
        )));
    }
    let n = source.n_cells();
    let tier = (q * n as f64).floor() as usize;
    if tier == 0 {
        return Err(Error::domain(format!(
            "q = {q} leaves an empty tier among {n} cells"
        )));
    }
    let avg = source.time_average();
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| avg[b].total_cmp(&avg[a]).then(a.cmp(&b)));
    let hot = &ranked[..tier];
    let cold = &ranked[n - tier..];
    Ok(hot
        .iter()
        .flat_map(|&h| cold.iter().map(move |&c| (h, c)))
        .collect())
}
