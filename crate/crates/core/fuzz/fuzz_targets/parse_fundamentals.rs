#![no_main]

use libfuzzer_sys::fuzz_target;
use mvrisk::ingest::parse_fundamentals;
use mvrisk::panel::build_dataset;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((rows, report)) = parse_fundamentals(text) {
        assert_eq!(report.rejections.len(), report.rows_rejected);
        let _ = build_dataset(rows, Vec::new());
    }
});
