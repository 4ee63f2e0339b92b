//! Test battery: ADF unit roots (single series and panel), Hausman, LR
//! groupwise heteroskedasticity, descriptive statistics and correlations.

mod adf;
mod describe;
mod hausman;
mod hetero;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

pub use adf::{
    adf_critical_values, adf_test, default_max_lags, fisher_combination, mackinnon_pvalue, panel_stationarity,
    IntegrationOrder, SeriesPanel, StationarityResult,
};
pub use describe::{correlation_matrix, descriptives, Correlation, CorrelationMatrix, DescriptiveRow};
pub use hausman::hausman_test;
pub use hetero::lr_heteroskedasticity;

/// Significance level for every accept/reject decision.
pub const LEVEL: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("series too short: {len} values, need at least {required}")]
    TooShort { len: usize, required: usize },
    #[error("series is constant")]
    ConstantSeries,
    #[error("degenerate regression: {0}")]
    Degenerate(String),
    #[error("fixed and random effects fits use different regressors: {fe:?} vs {re:?}")]
    SpecMismatch { fe: Vec<String>, re: Vec<String> },
    #[error("need at least 2 groups, found {0}")]
    TooFewGroups(usize),
    #[error("group {group} has {n} residuals, need at least 3")]
    GroupTooSmall { group: String, n: usize },
    #[error("{0} residuals but {1} group labels")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    FailToReject,
}

impl Decision {
    pub fn label(self) -> &'static str {
        match self {
            Decision::Reject => "reject",
            Decision::FailToReject => "fail to reject",
        }
    }
}

/// One hypothesis test. Either `p_value` or `critical_values` drives the decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    /// Level label ("1%", "5%", "10%") → critical value.
    pub critical_values: BTreeMap<String, f64>,
    /// Interval the p-value falls in, when only critical values are known.
    pub p_bracket: Option<String>,
    pub df: Option<f64>,
    pub decision: Decision,
    pub detail: String,
}

impl TestResult {
    pub(crate) fn from_p(name: &str, statistic: f64, p: f64, df: Option<f64>, detail: String) -> Self {
        Self {
            name: name.to_owned(),
            statistic,
            p_value: Some(p),
            critical_values: BTreeMap::new(),
            p_bracket: None,
            df,
            decision: if p < LEVEL { Decision::Reject } else { Decision::FailToReject },
            detail,
        }
    }
}
