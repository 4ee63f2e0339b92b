//! Augmented Dickey–Fuller test with a constant, plus the panel wrapper.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{Decision, DiagnosticsError, TestResult};
use crate::panel::FirmId;
use crate::regress::least_squares;
use crate::stats;

/// Minimum series length beyond the lag count.
const MIN_BASE_LEN: usize = 20;

/// MacKinnon (1991) constant-only response surface: (label, β∞, β1, β2).
const RESPONSE_SURFACE: [(&str, f64, f64, f64); 3] = [
    ("1%", -3.4336, -5.999, -29.25),
    ("5%", -2.8621, -2.738, -8.36),
    ("10%", -2.5671, -1.438, -4.48),
];

/// ⌊12·(T/100)^¼⌋.
pub fn default_max_lags(len: usize) -> usize {
    (12.0 * (len as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Finite-sample critical values for `nobs` regression observations.
pub fn adf_critical_values(nobs: usize) -> BTreeMap<String, f64> {
    let t = nobs as f64;
    RESPONSE_SURFACE
        .iter()
        .map(|&(label, b0, b1, b2)| (label.to_owned(), b0 + b1 / t + b2 / (t * t)))
        .collect()
}

/// Approximate asymptotic p-value of a constant-only ADF statistic
/// (MacKinnon 1994 normal-quantile polynomials). Used only to combine
/// per-series tests; single-series results report brackets instead.
pub fn mackinnon_pvalue(stat: f64) -> f64 {
    const TAU_MAX: f64 = 2.74;
    const TAU_MIN: f64 = -18.83;
    const TAU_STAR: f64 = -1.61;
    const SMALL: [f64; 3] = [2.1659, 1.4412, 3.8269e-2];
    const LARGE: [f64; 4] = [1.7339, 9.3202e-1, -1.2745e-1, -1.0368e-2];
    if stat > TAU_MAX {
        return 1.0;
    }
    if stat < TAU_MIN {
        return 0.0;
    }
    let coef: &[f64] = if stat <= TAU_STAR { &SMALL } else { &LARGE };
    let z = coef.iter().rev().fold(0.0, |acc, c| acc * stat + c);
    stats::normal_cdf(z)
}

struct AdfFit {
    stat: f64,
    rss: f64,
    nobs: usize,
}

/// Δy_j on [1, y_j, Δy_{j−1}, …, Δy_{j−p}] for j in start..len(Δy).
fn adf_regression(y: &[f64], dy: &[f64], lags: usize, start: usize) -> Result<AdfFit, DiagnosticsError> {
    let nobs = dy.len() - start;
    let k = lags + 2;
    let a = DMatrix::from_fn(nobs, k, |i, c| {
        let j = start + i;
        match c {
            0 => 1.0,
            1 => y[j],
            _ => dy[j - (c - 1)],
        }
    });
    let b = DVector::from_iterator(nobs, dy[start..].iter().copied());
    let names: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
    let ls = least_squares(&a, &b, &names).map_err(|e| DiagnosticsError::Degenerate(e.to_string()))?;
    let sigma2 = ls.rss / (nobs - k) as f64;
    let se = (sigma2 * ls.bread[(1, 1)]).sqrt();
    if !(se > 0.0) {
        return Err(DiagnosticsError::Degenerate("zero residual variance".into()));
    }
    Ok(AdfFit { stat: ls.coef[1] / se, rss: ls.rss, nobs })
}

/// ADF test with a constant; lag count chosen by AIC up to `max_lags`.
pub fn adf_test(series: &[f64], max_lags: usize) -> Result<TestResult, DiagnosticsError> {
    let required = MIN_BASE_LEN + max_lags;
    if series.len() < required {
        return Err(DiagnosticsError::TooShort { len: series.len(), required });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(DiagnosticsError::Degenerate("non-finite value in series".into()));
    }
    if series.iter().all(|v| *v == series[0]) {
        return Err(DiagnosticsError::ConstantSeries);
    }
    let dy: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();

    // AIC on the common sample that every candidate lag can use.
    let mut best = (0, f64::INFINITY);
    for lags in 0..=max_lags {
        let fit = adf_regression(series, &dy, lags, max_lags)?;
        let n = fit.nobs as f64;
        let aic = (fit.rss / n).ln() + 2.0 * (lags + 2) as f64 / n;
        if aic < best.1 {
            best = (lags, aic);
        }
    }
    let lags = best.0;
    let fit = adf_regression(series, &dy, lags, lags)?;
    let critical_values = adf_critical_values(fit.nobs);
    let bracket = if fit.stat < critical_values["1%"] {
        "<0.01"
    } else if fit.stat < critical_values["5%"] {
        "<0.05"
    } else if fit.stat < critical_values["10%"] {
        "<0.10"
    } else {
        ">=0.10"
    };
    let decision = if fit.stat < critical_values["5%"] { Decision::Reject } else { Decision::FailToReject };
    Ok(TestResult {
        name: "ADF".into(),
        statistic: fit.stat,
        p_value: None,
        critical_values,
        p_bracket: Some(bracket.into()),
        df: None,
        decision,
        detail: format!("constant, {lags} lag(s) by AIC (max {max_lags}), {} observations", fit.nobs),
    })
}

/// Fisher's combination −2 Σ ln p_i against χ²(2m).
pub fn fisher_combination(p_values: &[f64]) -> TestResult {
    let stat: f64 = p_values.iter().map(|p| -2.0 * p.max(f64::MIN_POSITIVE).ln()).sum();
    let df = 2.0 * p_values.len() as f64;
    TestResult::from_p(
        "Fisher-ADF",
        stat,
        stats::chi2_sf(stat, df),
        Some(df),
        format!("{} per-firm ADF p-values combined", p_values.len()),
    )
}

/// One variable's per-firm series, each in ascending year order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPanel {
    pub name: String,
    pub series: Vec<(FirmId, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntegrationOrder {
    #[serde(rename = "I(0)")]
    I0,
    #[serde(rename = "I(1)")]
    I1,
    #[serde(rename = "undetermined")]
    Undetermined,
}

impl IntegrationOrder {
    pub fn label(self) -> &'static str {
        match self {
            IntegrationOrder::I0 => "I(0)",
            IntegrationOrder::I1 => "I(1)",
            IntegrationOrder::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityResult {
    pub variable: String,
    /// Pooled (concatenated) series in levels.
    pub level: TestResult,
    /// Pooled per-firm first differences; run when levels do not reject.
    pub difference: Option<TestResult>,
    pub order: IntegrationOrder,
    /// Per-firm ADF combined by Fisher's method, when every firm's series is long enough.
    pub fisher: Option<TestResult>,
    pub notes: Vec<String>,
}

impl StationarityResult {
    /// Statistic at the level of integration reported.
    pub fn reported(&self) -> &TestResult {
        match (self.order, &self.difference) {
            (IntegrationOrder::I1, Some(d)) => d,
            _ => &self.level,
        }
    }
}

fn pooled_adf(values: &[f64]) -> Result<TestResult, DiagnosticsError> {
    adf_test(values, default_max_lags(values.len()))
}

fn fisher_for(panel: &SeriesPanel) -> Result<TestResult, String> {
    let mut p = Vec::with_capacity(panel.series.len());
    for (firm, s) in &panel.series {
        let lags = default_max_lags(s.len());
        let test = adf_test(s, lags).map_err(|e| format!("per-firm ADF unavailable for {firm}: {e}"))?;
        p.push(mackinnon_pvalue(test.statistic));
    }
    if p.len() < 2 {
        return Err("per-firm ADF needs at least 2 firms".into());
    }
    Ok(fisher_combination(&p))
}

fn stationarity(panel: &SeriesPanel) -> Result<StationarityResult, DiagnosticsError> {
    let pooled: Vec<f64> = panel.series.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    let level = pooled_adf(&pooled)?;
    let mut notes = Vec::new();
    let (difference, order) = if level.decision == Decision::Reject {
        (None, IntegrationOrder::I0)
    } else {
        let diffs: Vec<f64> =
            panel.series.iter().flat_map(|(_, s)| s.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()).collect();
        match pooled_adf(&diffs) {
            Ok(d) if d.decision == Decision::Reject => (Some(d), IntegrationOrder::I1),
            Ok(d) => (Some(d), IntegrationOrder::Undetermined),
            Err(e) => {
                notes.push(format!("first-difference ADF not computable: {e}"));
                (None, IntegrationOrder::Undetermined)
            }
        }
    };
    let fisher = match fisher_for(panel) {
        Ok(f) => Some(f),
        Err(reason) => {
            notes.push(reason);
            None
        }
    };
    Ok(StationarityResult { variable: panel.name.clone(), level, difference, order, fisher, notes })
}

/// Pooled-series ADF per variable with integration order, plus the per-firm
/// Fisher combination where the firm series allow it.
pub fn panel_stationarity(panels: &[SeriesPanel]) -> Vec<(String, Result<StationarityResult, DiagnosticsError>)> {
    panels.iter().map(|p| (p.name.clone(), stationarity(p))).collect()
}
