//! Least-squares estimation: pooled OLS, the entity fixed-effects (within)
//! estimator, Swamy–Arora random effects, and the period-clustered
//! ("White cross-section") sandwich covariance.

mod panel;
mod qr;
mod robust;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::panel::FirmId;
use crate::stats;

pub use panel::{fe_fit, re_fit, within_transform, Within};
pub use robust::robust_cov_white_cross_section;

pub(crate) use qr::PivotedQr;

/// Relative column-pivot tolerance: |R_jj| <= PIVOT_TOL·‖X‖_F is rank loss.
pub const PIVOT_TOL: f64 = 1e-10;

/// Name of the intercept column.
pub const INTERCEPT: &str = "C";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressError {
    #[error("too few observations: {nobs} rows for {params} parameters")]
    TooFewObservations { nobs: usize, params: usize },
    #[error("rank deficient design; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("non-finite value in column {0}")]
    NonFinite(String),
    #[error("duplicate column name {0}")]
    DuplicateColumn(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("need at least 2 time periods for clustered covariance, found {0}")]
    TooFewClusters(usize),
}

/// Regressor matrix with row provenance and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    row_index: Vec<(FirmId, i32)>,
    column_names: Vec<String>,
}

impl DesignMatrix {
    pub fn new(
        values: DMatrix<f64>,
        row_index: Vec<(FirmId, i32)>,
        column_names: Vec<String>,
    ) -> Result<Self, RegressError> {
        if values.nrows() != row_index.len() {
            return Err(RegressError::DimensionMismatch(format!(
                "{} rows but {} row labels",
                values.nrows(),
                row_index.len()
            )));
        }
        if values.ncols() != column_names.len() {
            return Err(RegressError::DimensionMismatch(format!(
                "{} columns but {} names",
                values.ncols(),
                column_names.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(RegressError::DuplicateColumn(name.clone()));
            }
        }
        for (j, name) in column_names.iter().enumerate() {
            if values.column(j).iter().any(|v| !v.is_finite()) {
                return Err(RegressError::NonFinite(name.clone()));
            }
        }
        Ok(Self { values, row_index, column_names })
    }

    /// Builds a design from named columns of equal length.
    pub fn from_columns(
        columns: Vec<(String, Vec<f64>)>,
        row_index: Vec<(FirmId, i32)>,
    ) -> Result<Self, RegressError> {
        let n = row_index.len();
        if let Some((name, col)) = columns.iter().find(|(_, c)| c.len() != n) {
            return Err(RegressError::DimensionMismatch(format!("column {name} has {} rows, expected {n}", col.len())));
        }
        let values = DMatrix::from_fn(n, columns.len(), |i, j| columns[j].1[i]);
        Self::new(values, row_index, columns.into_iter().map(|(name, _)| name).collect())
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row_index(&self) -> &[(FirmId, i32)] {
        &self.row_index
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_names.iter().position(|c| c == name)?;
        Some(self.values.column(j).iter().copied().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Effects {
    None,
    Entity,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    Classical,
    WhiteCrossSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RSquaredKind {
    /// 1 - RSS/TSS around the mean.
    Centered,
    /// 1 - RSS/Σy² (no intercept).
    Uncentered,
    /// On entity-demeaned data.
    Within,
    /// On quasi-demeaned (GLS-transformed) data.
    QuasiDemeaned,
}

impl RSquaredKind {
    pub fn label(self) -> &'static str {
        match self {
            RSquaredKind::Centered => "centered",
            RSquaredKind::Uncentered => "uncentered",
            RSquaredKind::Within => "within",
            RSquaredKind::QuasiDemeaned => "quasi-demeaned (GLS)",
        }
    }
}

/// Swamy–Arora variance components of a random-effects fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceComponents {
    pub sigma2_u: f64,
    pub sigma2_e: f64,
    /// Mean quasi-demeaning weight across rows (equal to the common θ when balanced).
    pub theta: f64,
    /// The between-based σ²_u came out negative and was set to zero.
    pub clamped: bool,
}

/// Estimation output.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub column_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub r_squared_kind: RSquaredKind,
    pub f_statistic: Option<f64>,
    pub f_pvalue: Option<f64>,
    pub nobs: usize,
    pub df_resid: usize,
    pub effects: Effects,
    pub cov_kind: CovKind,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub sigma2: f64,
    pub rss: f64,
    pub row_index: Vec<(FirmId, i32)>,
    pub entity_effects: Option<BTreeMap<FirmId, f64>>,
    pub variance_components: Option<VarianceComponents>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|j| self.coefficients[j])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|j| self.std_errors[j])
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|j| self.p_values[j])
    }

    pub fn t_stat(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|j| self.t_stats[j])
    }

    /// Replaces the covariance and recomputes standard errors, t and p.
    pub fn set_covariance(&mut self, covariance: DMatrix<f64>, kind: CovKind) {
        let (se, t, p) = inference(&self.coefficients, &covariance, self.df_resid);
        self.covariance = covariance;
        self.std_errors = se;
        self.t_stats = t;
        self.p_values = p;
        self.cov_kind = kind;
    }
}

/// Coefficients and the pieces needed for inference from one QR solve.
pub(crate) struct LeastSquares {
    pub coef: DVector<f64>,
    /// (XᵀX)⁻¹
    pub bread: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
}

/// Full-rank least squares via pivoted QR; names dependent columns otherwise.
pub(crate) fn least_squares(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
) -> Result<LeastSquares, RegressError> {
    check_rank(a, names)?;
    let qr = PivotedQr::new(a.clone(), PIVOT_TOL * a.norm());
    let coef = qr.solve(y);
    let residuals = y - a * &coef;
    let rss = residuals.norm_squared();
    Ok(LeastSquares { coef, bread: qr.unscaled_covariance(), residuals, rss })
}

pub(crate) fn check_rank(a: &DMatrix<f64>, names: &[String]) -> Result<(), RegressError> {
    let qr = PivotedQr::new(a.clone(), PIVOT_TOL * a.norm());
    if qr.rank() < a.ncols() {
        return Err(RegressError::RankDeficient {
            columns: qr.dependent_columns().into_iter().map(|j| names[j].clone()).collect(),
        });
    }
    Ok(())
}

/// Standard errors, t statistics and two-sided t p-values.
pub(crate) fn inference(coef: &[f64], cov: &DMatrix<f64>, df: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let se: Vec<f64> = (0..coef.len()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let t: Vec<f64> = coef
        .iter()
        .zip(&se)
        .map(|(&b, &s)| {
            if s > 0.0 {
                b / s
            } else if b == 0.0 {
                0.0
            } else {
                b.signum() * f64::INFINITY
            }
        })
        .collect();
    let p = t.iter().map(|&t| stats::t_two_sided(t, df as f64)).collect();
    (se, t, p)
}

pub(crate) fn f_test(explained: f64, rss: f64, df_model: usize, df_resid: usize) -> (Option<f64>, Option<f64>) {
    if df_model == 0 {
        return (None, None);
    }
    let f = if rss > 0.0 {
        (explained / df_model as f64) / (rss / df_resid as f64)
    } else {
        f64::INFINITY
    };
    let f = f.max(0.0);
    (Some(f), Some(stats::f_sf(f, df_model as f64, df_resid as f64)))
}

fn sum_sq_centered(y: &DVector<f64>) -> f64 {
    let mean = y.mean();
    y.iter().map(|v| (v - mean).powi(2)).sum()
}

pub(crate) fn r_squared(rss: f64, tss: f64) -> f64 {
    if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Ordinary least squares with classical covariance σ̂²(XᵀX)⁻¹.
pub fn ols_fit(x: &DesignMatrix, y: &[f64], intercept: bool) -> Result<FitResult, RegressError> {
    let n = x.nrows();
    if y.len() != n {
        return Err(RegressError::DimensionMismatch(format!("y has {} rows, X has {n}", y.len())));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(RegressError::NonFinite(format!("dependent ({v})")));
    }
    let k = x.ncols() + usize::from(intercept);
    if n <= k {
        return Err(RegressError::TooFewObservations { nobs: n, params: k });
    }
    let mut names = Vec::with_capacity(k);
    let a = if intercept {
        names.push(INTERCEPT.to_owned());
        let mut a = DMatrix::from_element(n, k, 1.0);
        a.view_mut((0, 1), (n, x.ncols())).copy_from(x.values());
        a
    } else {
        x.values().clone()
    };
    names.extend(x.column_names().iter().cloned());

    let yv = DVector::from_column_slice(y);
    let ls = least_squares(&a, &yv, &names)?;
    let df = n - k;
    let sigma2 = ls.rss / df as f64;
    let covariance = &ls.bread * sigma2;
    let coefficients: Vec<f64> = ls.coef.iter().copied().collect();
    let (se, t, p) = inference(&coefficients, &covariance, df);

    let (tss, kind, df_model) = if intercept {
        (sum_sq_centered(&yv), RSquaredKind::Centered, k - 1)
    } else {
        (yv.norm_squared(), RSquaredKind::Uncentered, k)
    };
    let (f_statistic, f_pvalue) = f_test((tss - ls.rss).max(0.0), ls.rss, df_model, df);
    let residuals: Vec<f64> = ls.residuals.iter().copied().collect();
    let fitted = y.iter().zip(&residuals).map(|(y, e)| y - e).collect();

    Ok(FitResult {
        column_names: names,
        coefficients,
        covariance,
        std_errors: se,
        t_stats: t,
        p_values: p,
        r_squared: r_squared(ls.rss, tss),
        r_squared_kind: kind,
        f_statistic,
        f_pvalue,
        nobs: n,
        df_resid: df,
        effects: Effects::None,
        cov_kind: CovKind::Classical,
        residuals,
        fitted,
        sigma2,
        rss: ls.rss,
        row_index: x.row_index().to_vec(),
        entity_effects: None,
        variance_components: None,
        warnings: Vec::new(),
    })
}
