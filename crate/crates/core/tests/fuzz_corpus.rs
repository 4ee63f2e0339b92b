//! Replays the checked-in fuzz corpus through the same assertions as the
//! fuzz targets, so the seeds stay valid inputs under plain `cargo test`.

use std::fs;
use std::path::PathBuf;

use mvrisk::ingest::{parse_fundamentals, parse_prices, parse_riskfree};
use mvrisk::panel::build_dataset;
use mvrisk::report::Table;

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

#[test]
fn fundamentals_seeds() {
    let mut parsed = 0;
    for (_, text) in seeds("parse_fundamentals") {
        if let Ok((rows, report)) = parse_fundamentals(&text) {
            assert_eq!(report.rejections.len(), report.rows_rejected);
            let _ = build_dataset(rows, Vec::new());
            parsed += 1;
        }
    }
    assert!(parsed >= 2);
}

#[test]
fn price_seeds() {
    let results: Vec<_> = seeds("parse_prices").into_iter().map(|(_, t)| parse_prices(&t)).collect();
    assert!(results.iter().any(Result::is_ok) && results.iter().any(Result::is_err));
    for series in results.iter().flatten().flatten() {
        assert!(series.points.iter().all(|p| p.close > 0.0 && p.close.is_finite()));
    }
}

#[test]
fn riskfree_seeds() {
    let results: Vec<_> = seeds("parse_riskfree").into_iter().map(|(_, t)| parse_riskfree(&t)).collect();
    assert!(results.iter().any(Result::is_ok) && results.iter().any(Result::is_err));
}

#[test]
fn table_seeds_round_trip() {
    for (path, text) in seeds("parse_table") {
        let table: Table = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again: Table = serde_json::from_str(&table.to_json()).unwrap();
        assert_eq!(again, table);
        assert_eq!(table.to_json(), text, "{} is not in emitted form", path.display());
        let _ = (table.to_csv(), table.to_markdown());
    }
}
