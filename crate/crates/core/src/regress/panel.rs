//! Entity fixed effects (within estimator) and Swamy–Arora random effects.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{
    check_rank, f_test, inference, least_squares, r_squared, robust, CovKind, DesignMatrix, Effects, FitResult,
    RSquaredKind, RegressError, VarianceComponents, INTERCEPT,
};
use crate::panel::FirmId;

/// Within-correlation with a linear trend above which a warning is raised.
const TREND_WARN_CORR: f64 = 0.999;

/// Entity-demeaned design and dependent variable.
#[derive(Debug, Clone)]
pub struct Within {
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    /// Firms with a single row; they contribute no within variation.
    pub singletons: Vec<FirmId>,
}

/// Row positions per firm, in firm order.
fn groups(rows: &[(FirmId, i32)]) -> BTreeMap<&FirmId, Vec<usize>> {
    let mut out: BTreeMap<&FirmId, Vec<usize>> = BTreeMap::new();
    for (i, (firm, _)) in rows.iter().enumerate() {
        out.entry(firm).or_default().push(i);
    }
    out
}

fn group_means(values: &[f64], groups: &BTreeMap<&FirmId, Vec<usize>>) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for idx in groups.values() {
        let m = idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64;
        for &i in idx {
            out[i] = m;
        }
    }
    out
}

fn demean(values: &[f64], groups: &BTreeMap<&FirmId, Vec<usize>>) -> Vec<f64> {
    let means = group_means(values, groups);
    values.iter().zip(&means).map(|(v, m)| v - m).collect()
}

fn columns(x: &DesignMatrix) -> Vec<Vec<f64>> {
    (0..x.ncols()).map(|j| x.values().column(j).iter().copied().collect()).collect()
}

/// Subtracts each firm's mean from every column of `x` and from `y`.
pub fn within_transform(x: &DesignMatrix, y: &[f64]) -> Result<Within, RegressError> {
    if y.len() != x.nrows() {
        return Err(RegressError::DimensionMismatch(format!("y has {} rows, X has {}", y.len(), x.nrows())));
    }
    let g = groups(x.row_index());
    let singletons = g.iter().filter(|(_, idx)| idx.len() == 1).map(|(f, _)| (*f).clone()).collect();
    let cols = columns(x)
        .iter()
        .zip(x.column_names())
        .map(|(c, name)| (name.clone(), demean(c, &g)))
        .collect();
    Ok(Within {
        x: DesignMatrix::from_columns(cols, x.row_index().to_vec())?,
        y: demean(y, &g),
        singletons,
    })
}

fn check_y(x: &DesignMatrix, y: &[f64]) -> Result<(), RegressError> {
    if y.len() != x.nrows() {
        return Err(RegressError::DimensionMismatch(format!("y has {} rows, X has {}", y.len(), x.nrows())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(RegressError::NonFinite("dependent".into()));
    }
    Ok(())
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

fn with_intercept(cols: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] })
}

/// Entity fixed-effects estimator.
///
/// Slopes come from OLS on firm-demeaned data. The reported intercept is the
/// average firm effect, obtained by adding the grand means back to the
/// demeaned data before the fit. Inference uses n − k − G residual degrees of
/// freedom and the within R².
pub fn fe_fit(x: &DesignMatrix, y: &[f64], cov_kind: CovKind) -> Result<FitResult, RegressError> {
    check_y(x, y)?;
    let n = x.nrows();
    let k = x.ncols();
    let g = groups(x.row_index());
    let n_groups = g.len();
    if n <= k + n_groups {
        return Err(RegressError::TooFewObservations { nobs: n, params: k + n_groups });
    }

    let within = within_transform(x, y)?;
    check_rank(within.x.values(), x.column_names())?;

    let mut warnings = Vec::new();
    if !within.singletons.is_empty() {
        warnings.push(format!(
            "{} firm(s) with a single observation contribute no within variation",
            within.singletons.len()
        ));
    }
    let trend: Vec<f64> = x.row_index().iter().map(|(_, year)| f64::from(*year)).collect();
    let trend_w = demean(&trend, &g);
    for (j, name) in x.column_names().iter().enumerate() {
        let col: Vec<f64> = within.x.values().column(j).iter().copied().collect();
        if let Some(r) = pearson(&col, &trend_w) {
            if r.abs() > TREND_WARN_CORR {
                warnings.push(format!(
                    "{name} is nearly collinear with a linear time trend under entity effects (within correlation {r:.6})"
                ));
            }
        }
    }

    // Grand-mean-restored data: x − x̄_i + x̄.
    let xcols = columns(x);
    let restored: Vec<Vec<f64>> = within
        .x
        .values()
        .column_iter()
        .zip(&xcols)
        .map(|(w, c)| {
            let grand = c.iter().sum::<f64>() / n as f64;
            w.iter().map(|v| v + grand).collect()
        })
        .collect();
    let y_grand = y.iter().sum::<f64>() / n as f64;
    let y_restored: Vec<f64> = within.y.iter().map(|v| v + y_grand).collect();

    let a = with_intercept(&restored, n);
    let mut names = vec![INTERCEPT.to_owned()];
    names.extend(x.column_names().iter().cloned());
    let yv = DVector::from_vec(y_restored);
    let ls = least_squares(&a, &yv, &names)?;

    let df = n - k - n_groups;
    let sigma2 = ls.rss / df as f64;
    let coefficients: Vec<f64> = ls.coef.iter().copied().collect();
    let residuals: Vec<f64> = ls.residuals.iter().copied().collect();
    let covariance = match cov_kind {
        CovKind::Classical => &ls.bread * sigma2,
        CovKind::WhiteCrossSection => robust::period_clustered(&a, &ls.bread, &residuals, x.row_index(), df)?,
    };
    let (se, t, p) = inference(&coefficients, &covariance, df);

    let tss_w: f64 = within.y.iter().map(|v| v * v).sum();
    let (f_statistic, f_pvalue) = f_test((tss_w - ls.rss).max(0.0), ls.rss, k, df);

    // Firm intercepts: ȳ_i − x̄_iᵀβ.
    let mut effects = BTreeMap::new();
    for (firm, idx) in &g {
        let m = idx.len() as f64;
        let mut alpha = idx.iter().map(|&i| y[i]).sum::<f64>() / m;
        for (j, c) in xcols.iter().enumerate() {
            alpha -= coefficients[j + 1] * idx.iter().map(|&i| c[i]).sum::<f64>() / m;
        }
        effects.insert((*firm).clone(), alpha);
    }
    let fitted = y.iter().zip(&residuals).map(|(y, e)| y - e).collect();

    Ok(FitResult {
        column_names: names,
        coefficients,
        covariance,
        std_errors: se,
        t_stats: t,
        p_values: p,
        r_squared: r_squared(ls.rss, tss_w),
        r_squared_kind: RSquaredKind::Within,
        f_statistic,
        f_pvalue,
        nobs: n,
        df_resid: df,
        effects: Effects::Entity,
        cov_kind,
        residuals,
        fitted,
        sigma2,
        rss: ls.rss,
        row_index: x.row_index().to_vec(),
        entity_effects: Some(effects),
        variance_components: None,
        warnings,
    })
}

/// Random-effects feasible GLS with Swamy–Arora variance components.
///
/// σ²_e comes from the within residuals, σ²_u from the between regression of
/// firm means less σ²_e over the harmonic-mean group size. A negative σ²_u is
/// set to zero (θ = 0, pooled OLS) with a warning.
pub fn re_fit(x: &DesignMatrix, y: &[f64]) -> Result<FitResult, RegressError> {
    check_y(x, y)?;
    let n = x.nrows();
    let k = x.ncols();
    let g = groups(x.row_index());
    let n_groups = g.len();
    if n_groups <= k + 1 {
        return Err(RegressError::TooFewObservations { nobs: n_groups, params: k + 1 });
    }
    if n <= k + n_groups {
        return Err(RegressError::TooFewObservations { nobs: n, params: k + n_groups });
    }

    let within = within_transform(x, y)?;
    let w_ls = least_squares(within.x.values(), &DVector::from_column_slice(&within.y), x.column_names())?;
    let sigma2_e = w_ls.rss / (n - n_groups - k) as f64;

    let xcols = columns(x);
    let mean_cols: Vec<Vec<f64>> = xcols
        .iter()
        .map(|c| g.values().map(|idx| idx.iter().map(|&i| c[i]).sum::<f64>() / idx.len() as f64).collect())
        .collect();
    let y_means: Vec<f64> = g.values().map(|idx| idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64).collect();
    let mut names = vec![INTERCEPT.to_owned()];
    names.extend(x.column_names().iter().cloned());
    let b_ls = least_squares(&with_intercept(&mean_cols, n_groups), &DVector::from_vec(y_means), &names)?;
    let t_bar = n_groups as f64 / g.values().map(|idx| 1.0 / idx.len() as f64).sum::<f64>();
    let raw_u = b_ls.rss / (n_groups - k - 1) as f64 - sigma2_e / t_bar;

    let mut warnings = Vec::new();
    let clamped = raw_u < 0.0;
    let sigma2_u = if clamped {
        warnings.push(format!(
            "between-firm variance component estimated negative ({raw_u:.6e}); set to zero, random effects reduce to pooled OLS"
        ));
        0.0
    } else {
        raw_u
    };

    let mut theta = vec![0.0; n];
    for idx in g.values() {
        let ti = idx.len() as f64;
        let th = if sigma2_e > 0.0 {
            1.0 - (sigma2_e / (ti * sigma2_u + sigma2_e)).sqrt()
        } else {
            1.0
        };
        for &i in idx {
            theta[i] = th.clamp(0.0, 1.0);
        }
    }

    let ybar = group_means(y, &g);
    let xbar: Vec<Vec<f64>> = xcols.iter().map(|c| group_means(c, &g)).collect();
    let y_star: Vec<f64> = (0..n).map(|i| y[i] - theta[i] * ybar[i]).collect();
    let a = DMatrix::from_fn(n, k + 1, |i, j| {
        if j == 0 {
            1.0 - theta[i]
        } else {
            xcols[j - 1][i] - theta[i] * xbar[j - 1][i]
        }
    });
    let yv = DVector::from_vec(y_star);
    let ls = least_squares(&a, &yv, &names)?;
    let df = n - k - 1;
    let sigma2 = ls.rss / df as f64;
    let covariance = &ls.bread * sigma2;
    let coefficients: Vec<f64> = ls.coef.iter().copied().collect();
    let (se, t, p) = inference(&coefficients, &covariance, df);

    let mean = yv.mean();
    let tss: f64 = yv.iter().map(|v| (v - mean).powi(2)).sum();
    let (f_statistic, f_pvalue) = f_test((tss - ls.rss).max(0.0), ls.rss, k, df);

    // Residuals on the original scale: y − Xβ.
    let residuals: Vec<f64> = (0..n)
        .map(|i| y[i] - coefficients[0] - (0..k).map(|j| coefficients[j + 1] * xcols[j][i]).sum::<f64>())
        .collect();
    let fitted = y.iter().zip(&residuals).map(|(y, e)| y - e).collect();

    Ok(FitResult {
        column_names: names,
        coefficients,
        covariance,
        std_errors: se,
        t_stats: t,
        p_values: p,
        r_squared: r_squared(ls.rss, tss),
        r_squared_kind: RSquaredKind::QuasiDemeaned,
        f_statistic,
        f_pvalue,
        nobs: n,
        df_resid: df,
        effects: Effects::Random,
        cov_kind: CovKind::Classical,
        residuals,
        fitted,
        sigma2,
        rss: ls.rss,
        row_index: x.row_index().to_vec(),
        entity_effects: None,
        variance_components: Some(VarianceComponents {
            sigma2_u,
            sigma2_e,
            theta: theta.iter().sum::<f64>() / n as f64,
            clamped,
        }),
        warnings,
    })
}
