#![no_main]

use libfuzzer_sys::fuzz_target;
use mvrisk::ingest::parse_prices;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(series) = parse_prices(text) {
        for s in &series {
            assert!(s.points.iter().all(|p| p.close > 0.0 && p.close.is_finite()));
        }
    }
});
