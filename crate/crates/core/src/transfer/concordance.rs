use serde::Serialize;

use super::ConcordanceSpec;
use crate::error::{Error, Result};
use crate::valuation::ValueTable;

#[inline]
fn discordant(a: &[f64], b: &[f64], i: usize, j: usize) -> bool {
    let da = a[i] - a[j];
    let db = b[i] - b[j];
    (da > 0.0 && db < 0.0) || (da < 0.0 && db > 0.0)
}

fn check(v: &ValueTable, other: &ValueTable, spec: &ConcordanceSpec) -> Result<()> {
    other.check_shape(v.horizon(), v.n_cells())?;
    if spec.pairs().is_empty() {
        return Err(Error::domain("concordance needs a non-empty pair set"));
    }
    spec.check_cells(v.n_cells())
}

/// Fraction of `(t, pair)` combinations, `t < horizon`, on which the two
/// tables order the pair strictly oppositely. Ties count as concordant.
pub fn concordance_loss(v: &ValueTable, other: &ValueTable, spec: &ConcordanceSpec) -> Result<f64> {
    check(v, other, spec)?;
    let mut bad = 0usize;
    for t in 0..v.horizon() {
        let (a, b) = (v.row(t), other.row(t));
        bad += spec
            .pairs()
            .iter()
            .filter(|&&(i, j)| discordant(a, b, i, j))
            .count();
    }
    Ok(bad as f64 / (v.horizon() * spec.pairs().len()) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcordanceReport {
    pub aggregate: f64,
    pub per_time: Vec<f64>,
}

/// `1 - concordance_loss`, overall and for each time slice.
pub fn concordance_rate_report(
    v: &ValueTable,
    other: &ValueTable,
    spec: &ConcordanceSpec,
) -> Result<ConcordanceReport> {
    let aggregate = 1.0 - concordance_loss(v, other, spec)?;
    let per_time = (0..v.horizon())
        .map(|t| {
            let (a, b) = (v.row(t), other.row(t));
            let bad = spec
                .pairs()
                .iter()
                .filter(|&&(i, j)| discordant(a, b, i, j))
                .count();
            1.0 - bad as f64 / spec.pairs().len() as f64
        })
        .collect();
    Ok(ConcordanceReport {
        aggregate,
        per_time,
    })
}
