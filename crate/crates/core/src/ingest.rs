//! CSV ingestion for fundamentals, monthly prices and risk-free rates.
//!
//! Dialect: comma separated, UTF-8, `.` as the decimal mark, header row
//! required. Fundamentals are soft-failed per row; a header that does not
//! match the schema is fatal. Price and rate files are small and hard-fail.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::panel::{FirmId, FirmYearObservation, MarketId, RiskFreeSeries, RISK_FREE_RANGE};

pub const FUNDAMENTALS_HEADER: [&str; 13] = [
    "firm_id",
    "market_id",
    "year",
    "price",
    "book_value",
    "eps",
    "sga",
    "rd",
    "sales",
    "total_assets",
    "total_equity",
    "establishment_year",
    "stakes",
];

/// Optional trailing column carrying the prior-year book value.
pub const BOOK_VALUE_PREV_COLUMN: &str = "book_value_prev";
pub const PRICES_HEADER: [&str; 4] = ["series_id", "year", "month", "close"];
pub const RISKFREE_HEADER: [&str; 3] = ["market_id", "year", "rate"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("schema mismatch: expected header `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: non-positive close {close} for series {series}")]
    NonPositivePrice { line: u64, series: String, close: f64 },
    #[error("line {line}: duplicate month {year}-{month:02} for series {series}")]
    DuplicateMonth { line: u64, series: String, year: i32, month: u32 },
    #[error("line {line}: rate {rate} for market {market} outside [0, 0.5]")]
    RateOutOfRange { line: u64, market: String, rate: f64 },
    #[error("line {line}: duplicate year {year} for market {market}")]
    DuplicateYear { line: u64, market: String, year: i32 },
    #[error("csv error: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

/// Outcome of a soft-failing parse.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub rows_accepted: usize,
    pub rows_rejected: usize,
    pub rejections: Vec<Rejection>,
}

/// A monthly closing price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricePoint {
    pub year: i32,
    pub month: u32,
    pub close: f64,
}

/// Monthly closes of one firm or market index, sorted by (year, month).
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub series_id: String,
    pub points: Vec<PricePoint>,
    /// Calendar months absent between the first and last observation.
    pub gaps: Vec<(i32, u32)>,
}

impl PriceSeries {
    /// Builds a series from unsorted points, recording gaps.
    pub fn from_points(series_id: impl Into<String>, mut points: Vec<PricePoint>) -> Self {
        points.sort_by_key(|p| (p.year, p.month));
        let mut gaps = Vec::new();
        for pair in points.windows(2) {
            let mut idx = month_index(pair[0].year, pair[0].month) + 1;
            let end = month_index(pair[1].year, pair[1].month);
            while idx < end {
                gaps.push(from_month_index(idx));
                idx += 1;
            }
        }
        Self { series_id: series_id.into(), points, gaps }
    }
}

/// Months since year 0, for gap arithmetic.
pub fn month_index(year: i32, month: u32) -> i64 {
    i64::from(year) * 12 + i64::from(month) - 1
}

pub fn from_month_index(idx: i64) -> (i32, u32) {
    (idx.div_euclid(12) as i32, (idx.rem_euclid(12) + 1) as u32)
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes())
}

fn check_header(record: Option<&csv::StringRecord>, expected: &[&str]) -> Result<(), IngestError> {
    let found = record.map(|r| r.iter().collect::<Vec<_>>().join(",")).unwrap_or_default();
    let ok = record.is_some_and(|r| r.len() == expected.len() && r.iter().zip(expected).all(|(a, b)| a == *b));
    if ok {
        Ok(())
    } else {
        Err(IngestError::SchemaMismatch { expected: expected.join(","), found })
    }
}

/// Parses a locale-independent decimal: digits, sign, `.` and exponent only.
pub fn parse_decimal(raw: &str, column: &str) -> Result<f64, String> {
    let valid = !raw.is_empty()
        && raw.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'))
        && raw.bytes().any(|b| b.is_ascii_digit());
    match raw.parse::<f64>() {
        Ok(v) if valid && v.is_finite() => Ok(v),
        _ => Err(format!("invalid number in column {column}: '{raw}'")),
    }
}

fn parse_int<T: std::str::FromStr>(raw: &str, column: &str) -> Result<T, String> {
    let valid = !raw.is_empty()
        && raw.bytes().enumerate().all(|(i, b)| b.is_ascii_digit() || (i == 0 && b == b'-'));
    match raw.parse::<T>() {
        Ok(v) if valid => Ok(v),
        _ => Err(format!("invalid integer in column {column}: '{raw}'")),
    }
}

fn parse_stakes(raw: &str) -> Result<Vec<f64>, String> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(';').map(|s| parse_decimal(s, "stakes")).collect()
}

fn csv_err(e: csv::Error) -> IngestError {
    IngestError::Csv(e.to_string())
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_observation(record: &csv::StringRecord, with_prev: bool) -> Result<FirmYearObservation, String> {
    let expected = FUNDAMENTALS_HEADER.len() + usize::from(with_prev);
    if record.len() != expected {
        return Err(format!("expected {expected} fields, found {}", record.len()));
    }
    let f = |i: usize| record.get(i).unwrap_or("");
    let id = |raw: &str, column: &str| {
        if raw.is_empty() {
            Err(format!("missing {column}"))
        } else {
            Ok(raw.to_owned())
        }
    };
    let obs = FirmYearObservation {
        firm_id: FirmId(id(f(0), "firm_id")?),
        market_id: MarketId(id(f(1), "market_id")?),
        year: parse_int(f(2), "year")?,
        price: parse_decimal(f(3), "price")?,
        book_value: parse_decimal(f(4), "book_value")?,
        eps: parse_decimal(f(5), "eps")?,
        sga: parse_decimal(f(6), "sga")?,
        rd: parse_decimal(f(7), "rd")?,
        sales: parse_decimal(f(8), "sales")?,
        total_assets: parse_decimal(f(9), "total_assets")?,
        total_equity: parse_decimal(f(10), "total_equity")?,
        establishment_year: parse_int(f(11), "establishment_year")?,
        controlling_stakes: parse_stakes(f(12))?,
        book_value_prev: match (with_prev, f(13)) {
            (true, raw) if !raw.is_empty() => Some(parse_decimal(raw, BOOK_VALUE_PREV_COLUMN)?),
            _ => None,
        },
    };
    obs.validate().map_err(|v| v.reason)?;
    Ok(obs)
}

/// Parses `fundamentals.csv`. Malformed or invalid rows are skipped and
/// recorded in the report.
pub fn parse_fundamentals(csv_text: &str) -> Result<(Vec<FirmYearObservation>, IngestReport), IngestError> {
    let mut rdr = reader(csv_text);
    let mut records = rdr.records();
    let header = records.next().transpose().map_err(csv_err)?;
    let with_prev = header
        .as_ref()
        .is_some_and(|h| h.len() == FUNDAMENTALS_HEADER.len() + 1 && h.get(FUNDAMENTALS_HEADER.len()) == Some(BOOK_VALUE_PREV_COLUMN));
    if with_prev {
        let mut expected: Vec<&str> = FUNDAMENTALS_HEADER.to_vec();
        expected.push(BOOK_VALUE_PREV_COLUMN);
        check_header(header.as_ref(), &expected)?;
    } else {
        check_header(header.as_ref(), &FUNDAMENTALS_HEADER)?;
    }

    let mut out = Vec::new();
    let mut report = IngestReport::default();
    for record in records {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                report.rows_rejected += 1;
                report.rejections.push(Rejection { line, reason: e.to_string() });
                continue;
            }
        };
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match parse_observation(&record, with_prev) {
            Ok(obs) => {
                report.rows_accepted += 1;
                out.push(obs);
            }
            Err(reason) => {
                report.rows_rejected += 1;
                report.rejections.push(Rejection { line: record_line(&record), reason });
            }
        }
    }
    Ok((out, report))
}

/// Parses `prices.csv` into per-series monthly closes.
pub fn parse_prices(csv_text: &str) -> Result<Vec<PriceSeries>, IngestError> {
    let mut rdr = reader(csv_text);
    let mut records = rdr.records();
    let header = records.next().transpose().map_err(csv_err)?;
    check_header(header.as_ref(), &PRICES_HEADER)?;

    let mut by_series: BTreeMap<String, BTreeMap<(i32, u32), f64>> = BTreeMap::new();
    for record in records {
        let record = record.map_err(csv_err)?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let line = record_line(&record);
        let malformed = |reason: String| IngestError::Malformed { line, reason };
        if record.len() != PRICES_HEADER.len() {
            return Err(malformed(format!("expected 4 fields, found {}", record.len())));
        }
        let series = record[0].to_owned();
        if series.is_empty() {
            return Err(malformed("missing series_id".into()));
        }
        let year: i32 = parse_int(&record[1], "year").map_err(malformed)?;
        let month: u32 = parse_int(&record[2], "month").map_err(malformed)?;
        if !(1..=12).contains(&month) {
            return Err(malformed(format!("month {month} outside 1..=12")));
        }
        let close = parse_decimal(&record[3], "close").map_err(malformed)?;
        if close <= 0.0 {
            return Err(IngestError::NonPositivePrice { line, series, close });
        }
        let months = by_series.entry(series.clone()).or_default();
        if months.insert((year, month), close).is_some() {
            return Err(IngestError::DuplicateMonth { line, series, year, month });
        }
    }

    Ok(by_series
        .into_iter()
        .map(|(id, months)| {
            let points = months
                .into_iter()
                .map(|((year, month), close)| PricePoint { year, month, close })
                .collect();
            PriceSeries::from_points(id, points)
        })
        .collect())
}

/// Parses `riskfree.csv` into one series per market.
pub fn parse_riskfree(csv_text: &str) -> Result<Vec<RiskFreeSeries>, IngestError> {
    let mut rdr = reader(csv_text);
    let mut records = rdr.records();
    let header = records.next().transpose().map_err(csv_err)?;
    check_header(header.as_ref(), &RISKFREE_HEADER)?;

    let mut by_market: BTreeMap<String, RiskFreeSeries> = BTreeMap::new();
    for record in records {
        let record = record.map_err(csv_err)?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let line = record_line(&record);
        let malformed = |reason: String| IngestError::Malformed { line, reason };
        if record.len() != RISKFREE_HEADER.len() {
            return Err(malformed(format!("expected 3 fields, found {}", record.len())));
        }
        let market = record[0].to_owned();
        if market.is_empty() {
            return Err(malformed("missing market_id".into()));
        }
        let year: i32 = parse_int(&record[1], "year").map_err(malformed)?;
        let rate = parse_decimal(&record[2], "rate").map_err(malformed)?;
        if !(RISK_FREE_RANGE.0..=RISK_FREE_RANGE.1).contains(&rate) {
            return Err(IngestError::RateOutOfRange { line, market, rate });
        }
        let series = by_market
            .entry(market.clone())
            .or_insert_with(|| RiskFreeSeries::new(MarketId(market.clone())));
        if series.rates.insert(year, rate).is_some() {
            return Err(IngestError::DuplicateYear { line, market, year });
        }
    }
    Ok(by_market.into_values().collect())
}

fn num(v: f64) -> String {
    // Display for f64 is the shortest string that round-trips.
    format!("{v}")
}

fn write_rows(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for row in rows {
        wtr.write_record(&row).expect("in-memory csv write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

/// Serializes observations in the `fundamentals.csv` format. The optional
/// `book_value_prev` column is written only when some row carries it.
pub fn write_fundamentals(rows: &[FirmYearObservation]) -> String {
    let with_prev = rows.iter().any(|o| o.book_value_prev.is_some());
    let mut header: Vec<String> = FUNDAMENTALS_HEADER.iter().map(|s| s.to_string()).collect();
    if with_prev {
        header.push(BOOK_VALUE_PREV_COLUMN.to_owned());
    }
    let body = rows.iter().map(|o| {
        let mut r = vec![
            o.firm_id.0.clone(),
            o.market_id.0.clone(),
            o.year.to_string(),
            num(o.price),
            num(o.book_value),
            num(o.eps),
            num(o.sga),
            num(o.rd),
            num(o.sales),
            num(o.total_assets),
            num(o.total_equity),
            o.establishment_year.to_string(),
            o.controlling_stakes.iter().map(|s| num(*s)).collect::<Vec<_>>().join(";"),
        ];
        if with_prev {
            r.push(o.book_value_prev.map(num).unwrap_or_default());
        }
        r
    });
    write_rows(std::iter::once(header).chain(body))
}

pub fn write_prices(series: &[PriceSeries]) -> String {
    let header = PRICES_HEADER.iter().map(|s| s.to_string()).collect();
    let body = series.iter().flat_map(|s| {
        s.points
            .iter()
            .map(move |p| vec![s.series_id.clone(), p.year.to_string(), p.month.to_string(), num(p.close)])
    });
    write_rows(std::iter::once(header).chain(body))
}

pub fn write_riskfree(series: &[RiskFreeSeries]) -> String {
    let header = RISKFREE_HEADER.iter().map(|s| s.to_string()).collect();
    let body = series.iter().flat_map(|s| {
        s.rates
            .iter()
            .map(move |(y, r)| vec![s.market_id.0.clone(), y.to_string(), num(*r)])
    });
    write_rows(std::iter::once(header).chain(body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::fixtures::observation;
    use proptest::prelude::*;

    const HEADER: &str =
        "firm_id,market_id,year,price,book_value,eps,sga,rd,sales,total_assets,total_equity,establishment_year,stakes";

    #[test]
    fn one_valid_row() {
        let text = format!("{HEADER}\nF01,QA,2015,1.7,1.28,0.2,10,2,32,80,40,1996,0.22;0.10;0.07\n");
        let (obs, report) = parse_fundamentals(&text).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(report.rows_accepted, 1);
        assert!(report.rejections.is_empty());
        assert_eq!(obs[0].controlling_stakes, vec![0.22, 0.10, 0.07]);
        assert_eq!(obs[0].book_value_prev, None);
    }

    #[test]
    fn zero_sales_rejected_softly() {
        let text = format!(
            "{HEADER}\nF01,QA,2015,1.7,1.28,0.2,10,2,0,80,40,1996,0.22\nF01,QA,2016,1.7,1.28,0.2,10,2,30,80,40,1996,\n"
        );
        let (obs, report) = parse_fundamentals(&text).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(report.rows_rejected, 1);
        assert_eq!(report.rejections[0], Rejection { line: 2, reason: "sales must be positive".into() });
    }

    #[test]
    fn rd_above_sga_rejected() {
        let text = format!("{HEADER}\nF01,QA,2015,1.7,1.28,0.2,2,3,32,80,40,1996,0.22\n");
        let (obs, report) = parse_fundamentals(&text).unwrap();
        assert!(obs.is_empty());
        assert_eq!(report.rejections[0].reason, "SG&A minus R&D negative");
    }

    #[test]
    fn accepted_plus_rejected_is_row_count() {
        let text = format!(
            "{HEADER}\nF01,QA,2015,1.7,1.28,0.2,10,2,32,80,40,1996,0.22\nF02,QA,2015,abc,1,1,1,1,1,1,1,1990,\nF03,QA,2015,1\n"
        );
        let (_, report) = parse_fundamentals(&text).unwrap();
        assert_eq!(report.rows_accepted + report.rows_rejected, 3);
        assert_eq!(report.rows_rejected, 2);
    }

    #[test]
    fn thousands_separators_and_locale_decimals_rejected() {
        assert!(parse_decimal("1,5", "x").is_err());
        assert!(parse_decimal("1 000", "x").is_err());
        assert!(parse_decimal(" 1.5", "x").is_err());
        assert!(parse_decimal("inf", "x").is_err());
        assert!(parse_decimal("NaN", "x").is_err());
        assert!(parse_decimal("", "x").is_err());
        assert_eq!(parse_decimal("-1.5e-3", "x").unwrap(), -0.0015);
    }

    #[test]
    fn renamed_column_is_fatal() {
        let text = HEADER.replace("sga", "sgna") + "\n";
        assert!(matches!(parse_fundamentals(&text), Err(IngestError::SchemaMismatch { .. })));
        assert!(matches!(parse_fundamentals(""), Err(IngestError::SchemaMismatch { .. })));
    }

    #[test]
    fn book_value_prev_extension() {
        let text = format!("{HEADER},book_value_prev\nF01,QA,2010,1.7,1.28,0.2,10,2,32,80,40,1996,0.22,1.1\nF01,QA,2011,1.7,1.28,0.2,10,2,32,80,40,1996,0.22,\n");
        let (obs, report) = parse_fundamentals(&text).unwrap();
        assert_eq!(report.rows_accepted, 2);
        assert_eq!(obs[0].book_value_prev, Some(1.1));
        assert_eq!(obs[1].book_value_prev, None);
    }

    #[test]
    fn prices_one_series_of_120() {
        let mut text = String::from("series_id,year,month,close\n");
        for i in 0..120 {
            text.push_str(&format!("F01,{},{},{}\n", 2010 + i / 12, i % 12 + 1, 10.0 + i as f64));
        }
        let series = parse_prices(&text).unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].points.len(), 120);
        assert!(series[0].gaps.is_empty());
    }

    #[test]
    fn prices_duplicate_month() {
        let text = "series_id,year,month,close\nF01,2010,1,10\nF01,2010,1,11\n";
        assert!(matches!(parse_prices(text), Err(IngestError::DuplicateMonth { month: 1, .. })));
    }

    #[test]
    fn prices_out_of_order_sorted_and_gaps_recorded() {
        let text = "series_id,year,month,close\nF01,2010,3,12\nF01,2009,12,10\nF01,2010,1,11\n";
        let s = &parse_prices(text).unwrap()[0];
        let months: Vec<_> = s.points.iter().map(|p| (p.year, p.month)).collect();
        assert_eq!(months, vec![(2009, 12), (2010, 1), (2010, 3)]);
        assert_eq!(s.gaps, vec![(2010, 2)]);
    }

    #[test]
    fn prices_non_positive() {
        let text = "series_id,year,month,close\nF01,2010,1,0\n";
        assert!(matches!(parse_prices(text), Err(IngestError::NonPositivePrice { .. })));
        assert!(matches!(parse_prices("id,year,month,close\n"), Err(IngestError::SchemaMismatch { .. })));
    }

    #[test]
    fn riskfree_series() {
        let text = "market_id,year,rate\nQA,2015,0.032\nAE,2015,0.04\nQA,2016,0.03\n";
        let series = parse_riskfree(text).unwrap();
        assert_eq!(series.len(), 2);
        let qa = series.iter().find(|s| s.market_id.as_str() == "QA").unwrap();
        assert_eq!(qa.rate(2015), Some(0.032));
        assert_eq!(qa.rates.len(), 2);
    }

    #[test]
    fn riskfree_negative_rate() {
        let text = "market_id,year,rate\nQA,2015,-0.01\n";
        assert!(matches!(parse_riskfree(text), Err(IngestError::RateOutOfRange { .. })));
    }

    #[test]
    fn writer_output_reparses() {
        let mut rows = vec![observation("A,1", 2015), observation("B", 2016)];
        rows[1].book_value_prev = Some(0.9);
        rows[1].controlling_stakes.clear();
        let (back, report) = parse_fundamentals(&write_fundamentals(&rows)).unwrap();
        assert_eq!(report.rows_rejected, 0);
        assert_eq!(back, rows);
    }

    fn arb_obs() -> impl Strategy<Value = FirmYearObservation> {
        (
            "[A-Z]{1,4}[0-9]{0,2}",
            1990i32..2030,
            1e-3f64..1e3,
            1e-3f64..1e3,
            -10.0f64..10.0,
            0.0f64..1e4,
            0.0f64..1.0,
            1e-3f64..1e5,
            1e-3f64..1e6,
            0.0f64..1.0,
            prop::collection::vec(0.01f64..0.25, 0..4),
            prop::option::of(1e-3f64..1e3),
        )
            .prop_map(|(firm, year, price, book, eps, rd, sga_extra, sales, assets, lev, stakes, prev)| {
                FirmYearObservation {
                    firm_id: FirmId(firm),
                    market_id: MarketId("QA".into()),
                    year,
                    price,
                    book_value: book,
                    eps,
                    sga: rd + sga_extra * 1e3,
                    rd,
                    sales,
                    total_assets: assets,
                    total_equity: assets * lev,
                    establishment_year: year - 5,
                    controlling_stakes: stakes,
                    book_value_prev: prev,
                }
            })
    }

    proptest! {
        #[test]
        fn fundamentals_round_trip(rows in prop::collection::vec(arb_obs(), 1..20)) {
            let (back, report) = parse_fundamentals(&write_fundamentals(&rows)).unwrap();
            prop_assert_eq!(report.rows_rejected, 0);
            prop_assert_eq!(back, rows);
        }
    }
}
