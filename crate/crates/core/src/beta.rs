//! Rolling-window systematic risk: the OLS slope of a firm's monthly simple
//! returns on its market index returns over the 60 months ending December
//! of each year, requiring at least 48 paired months.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::{month_index, PriceSeries};
use crate::panel::{FirmId, MarketId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BetaError {
    #[error("series {0} has no two consecutive months")]
    TooShort(String),
    #[error("{firm} {year}: only {paired} paired months in window (minimum {required})")]
    InsufficientWindow { firm: String, year: i32, paired: usize, required: usize },
    #[error("{firm} {year}: market returns have zero variance in window")]
    ZeroMarketVariance { firm: String, year: i32 },
    #[error("no market series {market} for firm {firm}")]
    UnknownMarket { firm: FirmId, market: MarketId },
    #[error("invalid window: minimum {min} must lie in 2..={max}")]
    InvalidWindow { min: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnPoint {
    pub year: i32,
    pub month: u32,
    /// Simple monthly return as a fraction.
    pub ret: f64,
}

/// Monthly simple returns, sorted and unique by (year, month).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub series_id: String,
    pub points: Vec<ReturnPoint>,
}

/// Window length and the minimum number of paired months it must contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BetaWindow {
    pub max_months: usize,
    pub min_months: usize,
}

impl Default for BetaWindow {
    fn default() -> Self {
        Self { max_months: 60, min_months: 48 }
    }
}

impl BetaWindow {
    pub fn new(max_months: usize, min_months: usize) -> Result<Self, BetaError> {
        if min_months < 2 || min_months > max_months {
            return Err(BetaError::InvalidWindow { min: min_months, max: max_months });
        }
        Ok(Self { max_months, min_months })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaEstimate {
    pub firm_id: FirmId,
    pub year: i32,
    pub beta: f64,
    pub n_months: usize,
    /// First paired month used.
    pub window_start: (i32, u32),
}

/// Simple returns between consecutive calendar months. A missing month
/// breaks the chain: no return spans a gap.
pub fn monthly_returns(prices: &PriceSeries) -> Result<ReturnSeries, BetaError> {
    let points: Vec<ReturnPoint> = prices
        .points
        .windows(2)
        .filter(|w| month_index(w[1].year, w[1].month) - month_index(w[0].year, w[0].month) == 1)
        .map(|w| ReturnPoint { year: w[1].year, month: w[1].month, ret: w[1].close / w[0].close - 1.0 })
        .collect();
    if points.is_empty() {
        return Err(BetaError::TooShort(prices.series_id.clone()));
    }
    Ok(ReturnSeries { series_id: prices.series_id.clone(), points })
}

/// Paired (firm, market) returns inside the window ending December `year`.
fn paired_window(
    firm: &ReturnSeries,
    market: &ReturnSeries,
    year: i32,
    window: BetaWindow,
) -> Vec<(i64, f64, f64)> {
    let end = month_index(year, 12);
    let start = end - window.max_months as i64 + 1;
    let in_window = |p: &&ReturnPoint| {
        let idx = month_index(p.year, p.month);
        idx >= start && idx <= end
    };
    let market_by_month: BTreeMap<i64, f64> = market
        .points
        .iter()
        .filter(in_window)
        .map(|p| (month_index(p.year, p.month), p.ret))
        .collect();
    firm.points
        .iter()
        .filter(in_window)
        .filter_map(|p| {
            let idx = month_index(p.year, p.month);
            market_by_month.get(&idx).map(|&m| (idx, p.ret, m))
        })
        .collect()
}

/// Slope of firm returns on market returns over the window for `year`.
pub fn beta_for_year(
    firm: &ReturnSeries,
    market: &ReturnSeries,
    year: i32,
    window: BetaWindow,
) -> Result<BetaEstimate, BetaError> {
    let pairs = paired_window(firm, market, year, window);
    if pairs.len() < window.min_months {
        return Err(BetaError::InsufficientWindow {
            firm: firm.series_id.clone(),
            year,
            paired: pairs.len(),
            required: window.min_months,
        });
    }
    let n = pairs.len() as f64;
    let mean_firm = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mean_mkt = pairs.iter().map(|p| p.2).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut sq) = (0.0, 0.0, 0.0);
    for &(_, rf, rm) in &pairs {
        let dm = rm - mean_mkt;
        sxy += dm * (rf - mean_firm);
        sxx += dm * dm;
        sq += rm * rm;
    }
    if !(sxx > 1e-12 * sq) {
        return Err(BetaError::ZeroMarketVariance { firm: firm.series_id.clone(), year });
    }
    let (sy, sm) = crate::ingest::from_month_index(pairs[0].0);
    Ok(BetaEstimate {
        firm_id: FirmId(firm.series_id.clone()),
        year,
        beta: sxy / sxx,
        n_months: pairs.len(),
        window_start: (sy, sm),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaExclusion {
    pub firm_id: FirmId,
    pub year: i32,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BetaSet {
    pub estimates: BTreeMap<(FirmId, i32), BetaEstimate>,
    pub exclusions: Vec<BetaExclusion>,
}

impl BetaSet {
    /// The (firm, year) → beta map consumed by variable construction.
    pub fn values(&self) -> BTreeMap<(FirmId, i32), f64> {
        self.estimates.iter().map(|(k, e)| (k.clone(), e.beta)).collect()
    }
}

/// Betas for every (firm, year) that has an estimable window; the rest are
/// reported as exclusions. Firms are matched to return series by id and to
/// their market index through `firm_market`.
pub fn all_betas(
    firms: &[ReturnSeries],
    markets: &[ReturnSeries],
    firm_market: &BTreeMap<FirmId, MarketId>,
    years: &[i32],
    window: BetaWindow,
) -> Result<BetaSet, BetaError> {
    let firm_series: BTreeMap<&str, &ReturnSeries> = firms.iter().map(|s| (s.series_id.as_str(), s)).collect();
    let market_series: BTreeMap<&str, &ReturnSeries> = markets.iter().map(|s| (s.series_id.as_str(), s)).collect();

    let mut out = BetaSet::default();
    for (firm, market) in firm_market {
        let Some(&fs) = firm_series.get(firm.as_str()) else {
            for &year in years {
                out.exclusions.push(BetaExclusion {
                    firm_id: firm.clone(),
                    year,
                    reason: "no price series".into(),
                });
            }
            continue;
        };
        let &ms = market_series
            .get(market.as_str())
            .ok_or_else(|| BetaError::UnknownMarket { firm: firm.clone(), market: market.clone() })?;
        for &year in years {
            match beta_for_year(fs, ms, year, window) {
                Ok(est) => {
                    out.estimates.insert((firm.clone(), year), est);
                }
                Err(e) => out.exclusions.push(BetaExclusion { firm_id: firm.clone(), year, reason: e.to_string() }),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PricePoint;
    use proptest::prelude::*;

    fn series(id: &str, start_year: i32, rets: &[f64]) -> ReturnSeries {
        let start = month_index(start_year, 1);
        let points = rets
            .iter()
            .enumerate()
            .map(|(i, &ret)| {
                let (year, month) = crate::ingest::from_month_index(start + i as i64);
                ReturnPoint { year, month, ret }
            })
            .collect();
        ReturnSeries { series_id: id.into(), points }
    }

    fn wavy(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| 0.04 * ((i as f64 + seed) * 1.7).sin() + 0.01 * ((i as f64) * 0.3).cos()).collect()
    }

    fn prices(id: &str, closes: &[(i32, u32, f64)]) -> PriceSeries {
        PriceSeries::from_points(
            id,
            closes.iter().map(|&(year, month, close)| PricePoint { year, month, close }).collect(),
        )
    }

    #[test]
    fn simple_return() {
        let r = monthly_returns(&prices("F", &[(2010, 1, 100.0), (2010, 2, 110.0)])).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!((r.points[0].ret - 0.10).abs() < 1e-15);
    }

    #[test]
    fn constant_closes_zero_returns() {
        let closes: Vec<_> = (1..=12).map(|m| (2010, m, 5.0)).collect();
        let r = monthly_returns(&prices("F", &closes)).unwrap();
        assert_eq!(r.points.len(), 11);
        assert!(r.points.iter().all(|p| p.ret == 0.0));
    }

    #[test]
    fn gap_breaks_chain() {
        let r = monthly_returns(&prices("F", &[(2010, 1, 100.0), (2010, 2, 110.0), (2010, 4, 120.0), (2010, 5, 90.0)]))
            .unwrap();
        let months: Vec<_> = r.points.iter().map(|p| (p.year, p.month)).collect();
        assert_eq!(months, vec![(2010, 2), (2010, 5)]);
        assert!(matches!(
            monthly_returns(&prices("F", &[(2010, 1, 1.0), (2010, 3, 1.0)])),
            Err(BetaError::TooShort(_))
        ));
    }

    #[test]
    fn identical_returns_give_unit_beta() {
        let m = series("M", 2015, &wavy(60, 0.0));
        let f = ReturnSeries { series_id: "F".into(), ..m.clone() };
        let est = beta_for_year(&f, &m, 2019, BetaWindow::default()).unwrap();
        assert_eq!(est.beta, 1.0);
        assert_eq!(est.n_months, 60);
        assert_eq!(est.window_start, (2015, 1));
    }

    #[test]
    fn constant_firm_returns_give_zero_beta() {
        let m = series("M", 2015, &wavy(60, 0.0));
        let f = series("F", 2015, &[0.01; 60]);
        assert!(beta_for_year(&f, &m, 2019, BetaWindow::default()).unwrap().beta.abs() < 1e-15);
    }

    #[test]
    fn exact_linear_relation() {
        let mr = wavy(60, 1.0);
        let m = series("M", 2015, &mr);
        let f = series("F", 2015, &mr.iter().map(|r| 2.0 * r + 0.001).collect::<Vec<_>>());
        assert!((beta_for_year(&f, &m, 2019, BetaWindow::default()).unwrap().beta - 2.0).abs() < 1e-12);
    }

    #[test]
    fn window_is_sixty_months_ending_december() {
        // 72 months from 2014; returns in 2014 are wild but outside the 2019 window.
        let mut mr = wavy(72, 2.0);
        let mut fr = mr.clone();
        for i in 0..12 {
            mr[i] = 0.3 * (i as f64).cos();
            fr[i] = -5.0 * mr[i];
        }
        let m = series("M", 2014, &mr);
        let f = series("F", 2014, &fr);
        let est = beta_for_year(&f, &m, 2019, BetaWindow::default()).unwrap();
        assert!((est.beta - 1.0).abs() < 1e-12);
        assert_eq!(est.window_start, (2015, 1));
    }

    #[test]
    fn minimum_window_enforced() {
        let mr = wavy(60, 0.5);
        let m = series("M", 2015, &mr);
        let f = series("F", 2015, &mr);
        let mut short = f.clone();
        // 47 paired months: drop 13 firm months.
        short.points.drain(0..13);
        assert!(matches!(
            beta_for_year(&short, &m, 2019, BetaWindow::default()),
            Err(BetaError::InsufficientWindow { paired: 47, required: 48, .. })
        ));
        let mut ok = f.clone();
        ok.points.drain(0..12);
        assert_eq!(beta_for_year(&ok, &m, 2019, BetaWindow::default()).unwrap().n_months, 48);
    }

    #[test]
    fn pairing_drops_months_missing_on_either_side() {
        let mr = wavy(60, 0.5);
        let mut m = series("M", 2015, &mr);
        let mut f = series("F", 2015, &mr);
        m.points.remove(5);
        f.points.remove(20);
        assert_eq!(beta_for_year(&f, &m, 2019, BetaWindow::default()).unwrap().n_months, 58);
    }

    #[test]
    fn zero_market_variance() {
        let m = series("M", 2015, &[0.01; 60]);
        let f = series("F", 2015, &wavy(60, 0.0));
        assert!(matches!(
            beta_for_year(&f, &m, 2019, BetaWindow::default()),
            Err(BetaError::ZeroMarketVariance { .. })
        ));
    }

    #[test]
    fn all_betas_years_and_exclusions() {
        // 120 months of returns from 2010: windows reach 48 months from 2013.
        let mr = wavy(120, 0.3);
        let markets = vec![series("QA", 2010, &mr)];
        let firms = vec![
            series("F1", 2010, &mr.iter().map(|r| 1.5 * r).collect::<Vec<_>>()),
            // Listed three years ago: 36 months.
            series("F2", 2017, &mr[84..].to_vec()),
        ];
        let map: BTreeMap<FirmId, MarketId> = [
            (FirmId::new("F1"), MarketId::new("QA")),
            (FirmId::new("F2"), MarketId::new("QA")),
        ]
        .into();
        let years: Vec<i32> = (2010..=2019).collect();
        let set = all_betas(&firms, &markets, &map, &years, BetaWindow::default()).unwrap();
        let f1_years: Vec<i32> = set.estimates.keys().filter(|(f, _)| f.as_str() == "F1").map(|(_, y)| *y).collect();
        assert_eq!(f1_years, (2013..=2019).collect::<Vec<_>>());
        assert!(set.estimates.keys().all(|(f, _)| f.as_str() == "F1"));
        assert_eq!(set.exclusions.iter().filter(|e| e.firm_id.as_str() == "F2").count(), 10);

        let mut rev_firms = firms.clone();
        rev_firms.reverse();
        assert_eq!(set, all_betas(&rev_firms, &markets, &map, &years, BetaWindow::default()).unwrap());

        let bad: BTreeMap<FirmId, MarketId> = [(FirmId::new("F1"), MarketId::new("AE"))].into();
        assert!(matches!(
            all_betas(&firms, &markets, &bad, &years, BetaWindow::default()),
            Err(BetaError::UnknownMarket { .. })
        ));
    }

    #[test]
    fn window_validation() {
        assert!(BetaWindow::new(60, 48).is_ok());
        assert!(BetaWindow::new(36, 48).is_err());
    }

    proptest! {
        #[test]
        fn market_against_itself(rets in prop::collection::vec(-0.3f64..0.3, 60)) {
            let m = series("M", 2015, &rets);
            if let Ok(est) = beta_for_year(&m, &m, 2019, BetaWindow::default()) {
                prop_assert!((est.beta - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn intercept_shift_and_scaling(
            rets in prop::collection::vec(-0.3f64..0.3, 60),
            noise in prop::collection::vec(-0.05f64..0.05, 60),
            c in -0.05f64..0.05,
            a in -3.0f64..3.0,
        ) {
            let m = series("M", 2015, &rets);
            let f: Vec<f64> = rets.iter().zip(&noise).map(|(r, e)| 0.8 * r + e).collect();
            let base = match beta_for_year(&series("F", 2015, &f), &m, 2019, BetaWindow::default()) {
                Ok(e) => e.beta,
                Err(_) => return Ok(()),
            };
            let shifted: Vec<f64> = f.iter().map(|r| r + c).collect();
            let b = beta_for_year(&series("F", 2015, &shifted), &m, 2019, BetaWindow::default()).unwrap().beta;
            prop_assert!((b - base).abs() <= 1e-12);
            let scaled: Vec<f64> = f.iter().map(|r| a * r).collect();
            let b = beta_for_year(&series("F", 2015, &scaled), &m, 2019, BetaWindow::default()).unwrap().beta;
            prop_assert!((b - a * base).abs() <= 1e-10);
        }
    }
}
