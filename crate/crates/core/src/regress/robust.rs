//! Period-clustered ("White cross-section") sandwich covariance.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{DesignMatrix, PivotedQr, RegressError, PIVOT_TOL};
use crate::panel::FirmId;

/// (XᵀX)⁻¹ (Σ_t X_tᵀ e_t e_tᵀ X_t) (XᵀX)⁻¹ · n/(n − k), clustering on year.
///
/// `x` must be the exact regressor matrix of the fit (including any intercept
/// column) and `residuals` its residuals.
pub fn robust_cov_white_cross_section(x: &DesignMatrix, residuals: &[f64]) -> Result<DMatrix<f64>, RegressError> {
    let (n, k) = (x.nrows(), x.ncols());
    if residuals.len() != n {
        return Err(RegressError::DimensionMismatch(format!("{} residuals for {n} rows", residuals.len())));
    }
    if n <= k {
        return Err(RegressError::TooFewObservations { nobs: n, params: k });
    }
    let qr = PivotedQr::new(x.values().clone(), PIVOT_TOL * x.values().norm());
    if qr.rank() < k {
        return Err(RegressError::RankDeficient {
            columns: qr.dependent_columns().into_iter().map(|j| x.column_names()[j].clone()).collect(),
        });
    }
    period_clustered(x.values(), &qr.unscaled_covariance(), residuals, x.row_index(), n - k)
}

/// Sandwich with a caller-supplied bread and residual degrees of freedom.
pub(crate) fn period_clustered(
    a: &DMatrix<f64>,
    bread: &DMatrix<f64>,
    residuals: &[f64],
    rows: &[(FirmId, i32)],
    df_resid: usize,
) -> Result<DMatrix<f64>, RegressError> {
    let k = a.ncols();
    let n = a.nrows();
    let mut scores: BTreeMap<i32, DVector<f64>> = BTreeMap::new();
    for (i, (_, year)) in rows.iter().enumerate() {
        let s = scores.entry(*year).or_insert_with(|| DVector::zeros(k));
        for j in 0..k {
            s[j] += a[(i, j)] * residuals[i];
        }
    }
    if scores.len() < 2 {
        return Err(RegressError::TooFewClusters(scores.len()));
    }
    let mut meat = DMatrix::zeros(k, k);
    for s in scores.values() {
        meat += s * s.transpose();
    }
    let scale = n as f64 / df_resid as f64;
    let v = bread * meat * bread * scale;
    Ok((&v + v.transpose()) * 0.5)
}
