//! Domain types and the validated panel container.
//!
//! Every downstream stage (variable construction, beta estimation,
//! regression) consumes a [`PanelDataset`]; nothing else is trusted to have
//! passed validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque firm identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FirmId(pub String);

/// Opaque market (exchange / index) identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarketId(pub String);

impl FirmId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl MarketId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FirmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for MarketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ownership threshold: stakes at or above this fraction count as controlling.
pub const CONTROLLING_STAKE_THRESHOLD: f64 = 0.05;

/// One firm-year of raw fundamentals.
///
/// Monetary fields are in a single currency (see [`PanelDataset::currency`]);
/// `price`, `book_value` and `eps` are per share, the rest are firm totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmYearObservation {
    pub firm_id: FirmId,
    pub market_id: MarketId,
    pub year: i32,
    /// Annual closing price.
    pub price: f64,
    /// Book value per share at 31 December.
    pub book_value: f64,
    pub eps: f64,
    /// Selling, general and administrative expense.
    pub sga: f64,
    /// R&D expense; may be zero.
    pub rd: f64,
    pub sales: f64,
    pub total_assets: f64,
    pub total_equity: f64,
    pub establishment_year: i32,
    /// Individual ownership stakes as fractions of voting rights.
    pub controlling_stakes: Vec<f64>,
    /// Prior-year book value per share, for rows whose firm has no t-1 row.
    pub book_value_prev: Option<f64>,
}

/// A single field-level invariant failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldViolation {
    pub field: &'static str,
    pub reason: String,
}

impl FieldViolation {
    fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self { field, reason: reason.into() }
    }
}

impl FirmYearObservation {
    /// Checks every field invariant, returning the first violation found.
    ///
    /// Reason strings are stable: ingest reports surface them verbatim.
    pub fn validate(&self) -> Result<(), FieldViolation> {
        let finite = [
            ("price", self.price),
            ("book_value", self.book_value),
            ("eps", self.eps),
            ("sga", self.sga),
            ("rd", self.rd),
            ("sales", self.sales),
            ("total_assets", self.total_assets),
            ("total_equity", self.total_equity),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(FieldViolation::new(field, format!("{field} must be finite")));
            }
        }
        if self.price <= 0.0 {
            return Err(FieldViolation::new("price", "price must be positive"));
        }
        if self.book_value <= 0.0 {
            return Err(FieldViolation::new("book_value", "book value must be positive"));
        }
        if self.total_assets <= 0.0 {
            return Err(FieldViolation::new("total_assets", "total assets must be positive"));
        }
        if self.sales <= 0.0 {
            return Err(FieldViolation::new("sales", "sales must be positive"));
        }
        if self.rd < 0.0 {
            return Err(FieldViolation::new("rd", "R&D must be non-negative"));
        }
        if self.sga < self.rd {
            return Err(FieldViolation::new("sga", "SG&A minus R&D negative"));
        }
        if self.total_equity < 0.0 || self.total_equity > self.total_assets {
            return Err(FieldViolation::new(
                "total_equity",
                "total equity must lie within [0, total assets]",
            ));
        }
        if self.establishment_year > self.year {
            return Err(FieldViolation::new(
                "establishment_year",
                "establishment year after observation year",
            ));
        }
        let mut sum = 0.0;
        for &s in &self.controlling_stakes {
            if !(s > 0.0 && s <= 1.0) {
                return Err(FieldViolation::new("stakes", "stake outside (0, 1]"));
            }
            sum += s;
        }
        // Tolerate rounding in exported percentages.
        if sum > 1.0 + 1e-9 {
            return Err(FieldViolation::new("stakes", "stakes sum exceeds 1"));
        }
        if let Some(b) = self.book_value_prev {
            if !(b.is_finite() && b > 0.0) {
                return Err(FieldViolation::new(
                    "book_value_prev",
                    "prior-year book value must be positive",
                ));
            }
        }
        Ok(())
    }

    pub fn key(&self) -> (FirmId, i32) {
        (self.firm_id.clone(), self.year)
    }
}

/// Annual risk-free rates (10-year government bond yield) for one market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFreeSeries {
    pub market_id: MarketId,
    pub rates: BTreeMap<i32, f64>,
}

/// Admissible range for an annual risk-free rate.
pub const RISK_FREE_RANGE: (f64, f64) = (0.0, 0.5);

impl RiskFreeSeries {
    pub fn new(market_id: MarketId) -> Self {
        Self { market_id, rates: BTreeMap::new() }
    }

    pub fn rate(&self, year: i32) -> Option<f64> {
        self.rates.get(&year).copied()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanelError {
    #[error("no observations supplied")]
    EmptyInput,
    #[error("duplicate observation for firm {firm} in {year}")]
    DuplicateKey { firm: FirmId, year: i32 },
    #[error("duplicate risk-free series for market {0}")]
    DuplicateRiskFree(MarketId),
    #[error("no risk-free rate for market {market} in {year}")]
    MissingRiskFree { market: MarketId, year: i32 },
    #[error("risk-free rate {rate} for market {market} in {year} outside [0, 0.5]")]
    RateOutOfRange { market: MarketId, year: i32, rate: f64 },
    #[error("invalid {field} for firm {firm} in {year}: {reason}")]
    InvariantViolation { firm: FirmId, year: i32, field: &'static str, reason: String },
}

/// Validated, immutable firm-year panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    observations: BTreeMap<(FirmId, i32), FirmYearObservation>,
    risk_free: BTreeMap<MarketId, RiskFreeSeries>,
    years: Vec<i32>,
    currency: String,
}

/// Builds a validated panel. Output is independent of input order.
pub fn build_dataset(
    rows: Vec<FirmYearObservation>,
    rf: Vec<RiskFreeSeries>,
) -> Result<PanelDataset, PanelError> {
    if rows.is_empty() {
        return Err(PanelError::EmptyInput);
    }

    let mut risk_free = BTreeMap::new();
    let mut rf = rf;
    rf.sort_by(|a, b| a.market_id.cmp(&b.market_id));
    for series in rf {
        for (&year, &rate) in &series.rates {
            if !(rate.is_finite() && rate >= RISK_FREE_RANGE.0 && rate <= RISK_FREE_RANGE.1) {
                return Err(PanelError::RateOutOfRange {
                    market: series.market_id.clone(),
                    year,
                    rate,
                });
            }
        }
        let id = series.market_id.clone();
        if risk_free.insert(id.clone(), series).is_some() {
            return Err(PanelError::DuplicateRiskFree(id));
        }
    }

    let mut rows = rows;
    rows.sort_by(|a, b| (&a.firm_id, a.year).cmp(&(&b.firm_id, b.year)));

    let mut observations = BTreeMap::new();
    for obs in rows {
        if let Err(v) = obs.validate() {
            return Err(PanelError::InvariantViolation {
                firm: obs.firm_id.clone(),
                year: obs.year,
                field: v.field,
                reason: v.reason,
            });
        }
        let has_rate = risk_free
            .get(&obs.market_id)
            .is_some_and(|s: &RiskFreeSeries| s.rates.contains_key(&obs.year));
        if !has_rate {
            return Err(PanelError::MissingRiskFree { market: obs.market_id.clone(), year: obs.year });
        }
        let key = obs.key();
        if observations.contains_key(&key) {
            return Err(PanelError::DuplicateKey { firm: key.0, year: key.1 });
        }
        observations.insert(key, obs);
    }

    let mut years: Vec<i32> = observations.keys().map(|(_, y)| *y).collect();
    years.sort_unstable();
    years.dedup();

    Ok(PanelDataset { observations, risk_free, years, currency: "USD".to_owned() })
}

impl PanelDataset {
    /// Replaces the currency tag. No conversion is performed.
    pub fn with_currency(mut self, currency: impl Into<String>) -> Self {
        self.currency = currency.into();
        self
    }

    pub fn currency(&self) -> &str {
        &self.currency
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Distinct panel years, ascending.
    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn get(&self, firm: &FirmId, year: i32) -> Option<&FirmYearObservation> {
        self.observations.get(&(firm.clone(), year))
    }

    /// Observations in (firm, year) order.
    pub fn observations(&self) -> impl Iterator<Item = &FirmYearObservation> {
        self.observations.values()
    }

    /// Distinct firms, sorted.
    pub fn firms(&self) -> Vec<FirmId> {
        let mut firms: Vec<FirmId> = self.observations.keys().map(|(f, _)| f.clone()).collect();
        firms.dedup();
        firms
    }

    /// Firm to market mapping (a firm's market is taken from its latest row).
    pub fn firm_markets(&self) -> BTreeMap<FirmId, MarketId> {
        self.observations
            .values()
            .map(|o| (o.firm_id.clone(), o.market_id.clone()))
            .collect()
    }

    pub fn risk_free(&self) -> impl Iterator<Item = &RiskFreeSeries> {
        self.risk_free.values()
    }

    pub fn risk_free_rate(&self, market: &MarketId, year: i32) -> Option<f64> {
        self.risk_free.get(market).and_then(|s| s.rate(year))
    }

    /// True when every firm is observed in every panel year.
    pub fn is_balanced(&self) -> bool {
        let firms = self.firms();
        firms.len() * self.years.len() == self.observations.len()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn observation(firm: &str, year: i32) -> FirmYearObservation {
        FirmYearObservation {
            firm_id: FirmId::new(firm),
            market_id: MarketId::new("QA"),
            year,
            price: 2.0,
            book_value: 1.2,
            eps: 0.15,
            sga: 10.0,
            rd: 2.0,
            sales: 32.0,
            total_assets: 80.0,
            total_equity: 40.0,
            establishment_year: 1990,
            controlling_stakes: vec![0.30, 0.10, 0.04],
            book_value_prev: None,
        }
    }

    pub fn risk_free(market: &str, years: std::ops::RangeInclusive<i32>, rate: f64) -> RiskFreeSeries {
        let mut s = RiskFreeSeries::new(MarketId::new(market));
        for y in years {
            s.rates.insert(y, rate);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn full_panel() -> Vec<FirmYearObservation> {
        let mut rows = Vec::new();
        for f in 0..20 {
            for y in 2010..2020 {
                rows.push(observation(&format!("F{f:02}"), y));
            }
        }
        rows
    }

    #[test]
    fn builds_two_hundred_observations() {
        let ds = build_dataset(full_panel(), vec![risk_free("QA", 2010..=2019, 0.03)]).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!(ds.firms().len(), 20);
        assert_eq!(ds.years(), (2010..2020).collect::<Vec<_>>().as_slice());
        assert!(ds.is_balanced());
        assert_eq!(ds.currency(), "USD");
    }

    #[test]
    fn empty_rows_rejected() {
        assert_eq!(build_dataset(vec![], vec![]).unwrap_err(), PanelError::EmptyInput);
    }

    #[test]
    fn duplicate_key_rejected() {
        let rows = vec![observation("A", 2015), observation("A", 2015)];
        let err = build_dataset(rows, vec![risk_free("QA", 2015..=2015, 0.03)]).unwrap_err();
        assert_eq!(err, PanelError::DuplicateKey { firm: FirmId::new("A"), year: 2015 });
    }

    #[test]
    fn missing_risk_free_rejected() {
        let rows = vec![observation("A", 2015), observation("A", 2016)];
        let err = build_dataset(rows, vec![risk_free("QA", 2015..=2015, 0.03)]).unwrap_err();
        assert_eq!(err, PanelError::MissingRiskFree { market: MarketId::new("QA"), year: 2016 });
    }

    #[test]
    fn violation_names_firm_year_and_field() {
        let mut bad = observation("B", 2012);
        bad.rd = 11.0;
        let err = build_dataset(vec![observation("A", 2012), bad], vec![risk_free("QA", 2012..=2012, 0.03)])
            .unwrap_err();
        match err {
            PanelError::InvariantViolation { firm, year, field, reason } => {
                assert_eq!(firm, FirmId::new("B"));
                assert_eq!(year, 2012);
                assert_eq!(field, "sga");
                assert_eq!(reason, "SG&A minus R&D negative");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn field_invariants() {
        let cases: Vec<(Box<dyn Fn(&mut FirmYearObservation)>, &str)> = vec![
            (Box::new(|o| o.price = 0.0), "price"),
            (Box::new(|o| o.book_value = -1.0), "book_value"),
            (Box::new(|o| o.total_assets = 0.0), "total_assets"),
            (Box::new(|o| o.sales = 0.0), "sales"),
            (Box::new(|o| o.rd = -0.5), "rd"),
            (Box::new(|o| o.establishment_year = 2031), "establishment_year"),
            (Box::new(|o| o.controlling_stakes = vec![0.0]), "stakes"),
            (Box::new(|o| o.controlling_stakes = vec![0.6, 0.5]), "stakes"),
            (Box::new(|o| o.total_equity = 100.0), "total_equity"),
            (Box::new(|o| o.eps = f64::NAN), "eps"),
            (Box::new(|o| o.book_value_prev = Some(0.0)), "book_value_prev"),
        ];
        for (mutate, field) in cases {
            let mut o = observation("A", 2015);
            mutate(&mut o);
            assert_eq!(o.validate().unwrap_err().field, field);
        }
        assert!(observation("A", 2015).validate().is_ok());
    }

    #[test]
    fn rate_out_of_range_rejected() {
        let err = build_dataset(vec![observation("A", 2015)], vec![risk_free("QA", 2015..=2015, 0.7)])
            .unwrap_err();
        assert!(matches!(err, PanelError::RateOutOfRange { .. }));
    }

    #[test]
    fn unbalanced_panel_is_recorded() {
        let rows = vec![observation("A", 2015), observation("A", 2016), observation("B", 2016)];
        let ds = build_dataset(rows, vec![risk_free("QA", 2015..=2016, 0.03)]).unwrap();
        assert!(!ds.is_balanced());
    }

    #[test]
    fn order_independent() {
        let rows = full_panel();
        let mut reversed = rows.clone();
        reversed.reverse();
        let rf = vec![risk_free("QA", 2010..=2019, 0.03)];
        assert_eq!(build_dataset(rows, rf.clone()).unwrap(), build_dataset(reversed, rf).unwrap());
    }
}
