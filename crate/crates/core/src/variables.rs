//! Derived regression variables: abnormal earnings, marketing investment
//! (baseline and two alternates), controls, ownership concentration.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::panel::{FirmId, FirmYearObservation, MarketId, PanelDataset, CONTROLLING_STAKE_THRESHOLD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariableError {
    #[error("no prior-year book value for firm {firm} in {year}")]
    MissingLag { firm: FirmId, year: i32 },
    #[error("prior-year book value must be positive, got {0}")]
    NonPositiveBook(f64),
    #[error("risk-free rate must be non-negative, got {0}")]
    NegativeRate(f64),
    #[error("marketing expense (SG&A minus R&D) is negative")]
    NegativeNumerator,
    #[error("denominator must be positive, got {0}")]
    ZeroSales(f64),
    #[error("marketing expense must be positive for the log measure, got {0}")]
    NonPositiveExpense(f64),
}

/// Earnings in excess of the normal return on opening book value.
pub fn abnormal_earnings(eps_t: f64, r: f64, book_prev: f64) -> Result<f64, VariableError> {
    if r < 0.0 {
        return Err(VariableError::NegativeRate(r));
    }
    if book_prev <= 0.0 {
        return Err(VariableError::NonPositiveBook(book_prev));
    }
    Ok(eps_t - r * book_prev)
}

fn marketing_ratio(sga: f64, rd: f64, denominator: f64) -> Result<f64, VariableError> {
    if denominator <= 0.0 {
        return Err(VariableError::ZeroSales(denominator));
    }
    if sga < rd || rd < 0.0 {
        return Err(VariableError::NegativeNumerator);
    }
    Ok((sga - rd) / denominator)
}

/// Marketing investment: (SG&A - R&D) / sales.
pub fn marin(sga: f64, rd: f64, sales: f64) -> Result<f64, VariableError> {
    marketing_ratio(sga, rd, sales)
}

/// Robustness alternate: (SG&A - R&D) / total assets.
pub fn marin_alt_assets(sga: f64, rd: f64, total_assets: f64) -> Result<f64, VariableError> {
    marketing_ratio(sga, rd, total_assets)
}

/// Robustness alternate: ln(SG&A - R&D).
pub fn marin_alt_log(sga: f64, rd: f64) -> Result<f64, VariableError> {
    let expense = sga - rd;
    if expense > 0.0 {
        Ok(expense.ln())
    } else {
        Err(VariableError::NonPositiveExpense(expense))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controls {
    pub age: f64,
    pub size: f64,
    pub lev: f64,
}

/// Firm age, log total assets and equity-to-assets leverage.
pub fn control_variables(obs: &FirmYearObservation) -> Controls {
    Controls {
        age: f64::from(obs.year - obs.establishment_year),
        size: obs.total_assets.ln(),
        lev: obs.total_equity / obs.total_assets,
    }
}

/// Sum of the stakes held by controlling shareholders (at least 5% each).
pub fn ownership_concentration(stakes: &[f64]) -> f64 {
    stakes.iter().filter(|&&s| s >= CONTROLLING_STAKE_THRESHOLD).sum()
}

/// Variables addressable in the derived panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Variable {
    Price,
    Book,
    AbnormalEarnings,
    Marin,
    MarinAssets,
    MarinLog,
    Age,
    Size,
    TotalAssets,
    Lev,
    Ownership,
    Beta,
    PriceToBook,
}

impl Variable {
    /// Column name used in design matrices and truth records.
    pub fn name(self) -> &'static str {
        match self {
            Variable::Price => "P",
            Variable::Book => "B",
            Variable::AbnormalEarnings => "X",
            Variable::Marin => "Marin",
            Variable::MarinAssets => "Marin_assets",
            Variable::MarinLog => "ln_Marketing",
            Variable::Age => "AGE",
            Variable::Size => "Size",
            Variable::TotalAssets => "Total Assets",
            Variable::Lev => "Lev",
            Variable::Ownership => "OW",
            Variable::Beta => "Bet",
            Variable::PriceToBook => "P/B",
        }
    }

    /// Label used in descriptive tables.
    pub fn label(self) -> &'static str {
        match self {
            Variable::Age => "Age",
            Variable::TotalAssets => "Total Assets",
            other => other.name(),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// All constructed variables for one firm-year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedRow {
    pub firm_id: FirmId,
    pub market_id: MarketId,
    pub year: i32,
    pub price: f64,
    pub book_value: f64,
    pub x_abnormal: f64,
    pub marin: f64,
    pub marin_alt_assets: f64,
    /// Absent when marketing expense is zero; only the log variant drops the row.
    pub marin_alt_log: Option<f64>,
    pub age: f64,
    pub size: f64,
    pub total_assets: f64,
    pub lev: f64,
    pub ow: f64,
    pub beta: f64,
    pub pb_ratio: f64,
    /// Set when SG&A equals R&D (no marketing expense).
    pub zero_marketing: bool,
}

impl DerivedRow {
    pub fn get(&self, var: Variable) -> Option<f64> {
        Some(match var {
            Variable::Price => self.price,
            Variable::Book => self.book_value,
            Variable::AbnormalEarnings => self.x_abnormal,
            Variable::Marin => self.marin,
            Variable::MarinAssets => self.marin_alt_assets,
            Variable::MarinLog => return self.marin_alt_log,
            Variable::Age => self.age,
            Variable::Size => self.size,
            Variable::TotalAssets => self.total_assets,
            Variable::Lev => self.lev,
            Variable::Ownership => self.ow,
            Variable::Beta => self.beta,
            Variable::PriceToBook => self.pb_ratio,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Exclusion {
    pub firm_id: FirmId,
    pub year: i32,
    pub reason: String,
}

pub const REASON_NO_BETA: &str = "insufficient return history";
pub const REASON_NO_LAG: &str = "missing lagged book value";

/// Derived rows keyed by (firm, year), plus every row that was left out.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DerivedPanel {
    pub rows: BTreeMap<(FirmId, i32), DerivedRow>,
    pub exclusions: Vec<Exclusion>,
}

impl DerivedPanel {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DerivedRow> {
        self.rows.values()
    }

    /// Values of `var` in (firm, year) order, skipping rows where it is absent.
    pub fn column(&self, var: Variable) -> Vec<f64> {
        self.rows.values().filter_map(|r| r.get(var)).collect()
    }
}

/// Builds the derived panel. Rows lacking a lagged book value or a beta are
/// excluded with a reason; the panel as a whole never fails.
pub fn derive_all(ds: &PanelDataset, betas: &BTreeMap<(FirmId, i32), f64>) -> DerivedPanel {
    let mut out = DerivedPanel::default();
    for obs in ds.observations() {
        match derive_row(ds, obs, betas) {
            Ok(row) => {
                out.rows.insert(obs.key(), row);
            }
            Err(reason) => out.exclusions.push(Exclusion {
                firm_id: obs.firm_id.clone(),
                year: obs.year,
                reason: reason.to_owned(),
            }),
        }
    }
    out
}

fn derive_row(
    ds: &PanelDataset,
    obs: &FirmYearObservation,
    betas: &BTreeMap<(FirmId, i32), f64>,
) -> Result<DerivedRow, &'static str> {
    let book_prev = ds
        .get(&obs.firm_id, obs.year - 1)
        .map(|prev| prev.book_value)
        .or(obs.book_value_prev)
        .ok_or(REASON_NO_LAG)?;
    let beta = *betas.get(&obs.key()).ok_or(REASON_NO_BETA)?;
    // Validated datasets guarantee the rate and the ratio preconditions.
    let r = ds.risk_free_rate(&obs.market_id, obs.year).ok_or("missing risk-free rate")?;
    let x_abnormal = abnormal_earnings(obs.eps, r, book_prev).map_err(|_| "invalid abnormal earnings inputs")?;
    let marin = marin(obs.sga, obs.rd, obs.sales).map_err(|_| "invalid marketing ratio inputs")?;
    let marin_alt_assets =
        marin_alt_assets(obs.sga, obs.rd, obs.total_assets).map_err(|_| "invalid marketing ratio inputs")?;
    let controls = control_variables(obs);
    Ok(DerivedRow {
        firm_id: obs.firm_id.clone(),
        market_id: obs.market_id.clone(),
        year: obs.year,
        price: obs.price,
        book_value: obs.book_value,
        x_abnormal,
        marin,
        marin_alt_assets,
        marin_alt_log: marin_alt_log(obs.sga, obs.rd).ok(),
        age: controls.age,
        size: controls.size,
        total_assets: obs.total_assets,
        lev: controls.lev,
        ow: ownership_concentration(&obs.controlling_stakes),
        beta,
        pb_ratio: obs.price / obs.book_value,
        zero_marketing: obs.sga == obs.rd,
    })
}
