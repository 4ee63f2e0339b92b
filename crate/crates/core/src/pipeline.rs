//! The full analysis sequence on a validated panel: betas, derived
//! variables, descriptives, correlations, unit roots, the four models and the
//! robustness variants.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::beta::{all_betas, monthly_returns, BetaError, BetaSet, BetaWindow, ReturnSeries};
use crate::diagnostics::{
    correlation_matrix, descriptives, panel_stationarity, CorrelationMatrix, DescriptiveRow, DiagnosticsError,
    SeriesPanel, StationarityResult,
};
use crate::ingest::PriceSeries;
use crate::models::{estimate, robustness_suite, spec_for, EstimationReport, MarinVariant, ModelError, ModelId};
use crate::panel::PanelDataset;
use crate::variables::{derive_all, DerivedPanel, Variable};

/// Variables summarized in the descriptive table, in display order.
pub const DESCRIPTIVE_VARIABLES: [Variable; 10] = [
    Variable::Price,
    Variable::Book,
    Variable::AbnormalEarnings,
    Variable::Marin,
    Variable::Age,
    Variable::TotalAssets,
    Variable::Lev,
    Variable::Beta,
    Variable::Ownership,
    Variable::PriceToBook,
];

/// Variables in the correlation matrix, in display order.
pub const CORRELATION_VARIABLES: [Variable; 9] = [
    Variable::Price,
    Variable::AbnormalEarnings,
    Variable::Book,
    Variable::Marin,
    Variable::Beta,
    Variable::Lev,
    Variable::Ownership,
    Variable::Size,
    Variable::Age,
];

/// Variables tested for unit roots, in display order.
pub const STATIONARITY_VARIABLES: [Variable; 8] = [
    Variable::Price,
    Variable::AbnormalEarnings,
    Variable::Marin,
    Variable::Age,
    Variable::Size,
    Variable::Lev,
    Variable::Beta,
    Variable::Ownership,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("market series {market}: {source}")]
    MarketSeries { market: String, source: BetaError },
    #[error(transparent)]
    Beta(#[from] BetaError),
    #[error("no firm-year has both a lagged book value and a beta")]
    EmptyDerivedPanel,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunOptions {
    pub marin_variant: MarinVariant,
    pub center: bool,
    pub constrain_book_unit: bool,
    pub window: BetaWindow,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            marin_variant: MarinVariant::SalesRatio,
            center: false,
            constrain_book_unit: false,
            window: BetaWindow::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub options: RunOptions,
    pub betas: BetaSet,
    pub derived: DerivedPanel,
    pub descriptives: Vec<DescriptiveRow>,
    pub correlations: CorrelationMatrix,
    pub stationarity: Vec<(String, Result<StationarityResult, DiagnosticsError>)>,
    /// The four models in [`ModelId::ALL`] order under the chosen variant.
    pub models: Vec<EstimationReport>,
    /// Moderated models under the assets-ratio and log-level variants.
    pub robustness: Vec<EstimationReport>,
}

impl Analysis {
    pub fn model(&self, id: ModelId) -> Option<&EstimationReport> {
        self.models.iter().find(|r| r.model_id() == id)
    }
}

/// Window betas for every firm-year and the derived panel built on them.
/// Price series whose id names a market are that market's index.
pub fn derive_panel(
    ds: &PanelDataset,
    prices: &[PriceSeries],
    window: BetaWindow,
) -> Result<(DerivedPanel, BetaSet), PipelineError> {
    let firm_markets = ds.firm_markets();
    let market_ids: BTreeSet<&str> = firm_markets.values().map(|m| m.as_str()).collect();
    let mut markets: Vec<ReturnSeries> = Vec::new();
    let mut firms: Vec<ReturnSeries> = Vec::new();
    for series in prices {
        if market_ids.contains(series.series_id.as_str()) {
            let r = monthly_returns(series)
                .map_err(|source| PipelineError::MarketSeries { market: series.series_id.clone(), source })?;
            markets.push(r);
        } else if let Ok(r) = monthly_returns(series) {
            // A firm series without two consecutive months yields no beta;
            // its rows are excluded downstream.
            firms.push(r);
        }
    }
    let betas = all_betas(&firms, &markets, &firm_markets, ds.years(), window)?;
    let derived = derive_all(ds, &betas.values());
    if derived.is_empty() {
        return Err(PipelineError::EmptyDerivedPanel);
    }
    Ok((derived, betas))
}

fn series_panels(derived: &DerivedPanel) -> Vec<SeriesPanel> {
    STATIONARITY_VARIABLES
        .iter()
        .map(|&v| {
            let mut series: Vec<(crate::panel::FirmId, Vec<f64>)> = Vec::new();
            for row in derived.iter() {
                let Some(value) = row.get(v) else { continue };
                match series.last_mut() {
                    Some((firm, values)) if *firm == row.firm_id => values.push(value),
                    _ => series.push((row.firm_id.clone(), vec![value])),
                }
            }
            SeriesPanel { name: v.label().to_owned(), series }
        })
        .collect()
}

/// Runs every analysis step. Diagnostics that cannot be computed are
/// recorded in place; model estimation failures abort the run.
pub fn analyze(ds: &PanelDataset, prices: &[PriceSeries], options: RunOptions) -> Result<Analysis, PipelineError> {
    let (derived, betas) = derive_panel(ds, prices, options.window)?;
    let descriptives = descriptives(&derived, &DESCRIPTIVE_VARIABLES);
    let correlations = correlation_matrix(&derived, &CORRELATION_VARIABLES);
    let stationarity = panel_stationarity(&series_panels(&derived));

    let mut models = Vec::with_capacity(4);
    for id in ModelId::ALL {
        let spec = spec_for(id, options.marin_variant)
            .with_centering(options.center)
            .with_book_unit(options.constrain_book_unit);
        models.push(estimate(&derived, &spec)?);
    }
    let robustness = robustness_suite(&derived, options.center, options.constrain_book_unit)?;

    Ok(Analysis { options, betas, derived, descriptives, correlations, stationarity, models, robustness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_panel, DgpConfig};

    #[test]
    fn synthetic_run() {
        let out = generate_panel(&DgpConfig::default()).unwrap();
        let a = analyze(&out.dataset, &out.prices, RunOptions::default()).unwrap();
        assert_eq!(a.derived.len(), 200);
        assert!(a.betas.exclusions.is_empty());
        assert_eq!(a.models.len(), 4);
        assert_eq!(a.robustness.len(), 4);
        assert_eq!(a.stationarity.len(), 8);
        // Window betas reproduce the planted targets.
        for p in &out.truth.planted_betas {
            let key = (crate::panel::FirmId::new(p.firm_id.clone()), p.year);
            assert!((a.betas.estimates[&key].beta - p.beta).abs() < 1e-10);
        }
    }

    #[test]
    fn missing_firm_prices_exclude_rows() {
        let out = generate_panel(&DgpConfig::default()).unwrap();
        let prices: Vec<_> = out.prices.iter().filter(|s| s.series_id != "F001").cloned().collect();
        let (derived, betas) = derive_panel(&out.dataset, &prices, BetaWindow::default()).unwrap();
        assert_eq!(derived.len(), 190);
        assert_eq!(betas.exclusions.len(), 10);
    }
}
