#![no_main]

use libfuzzer_sys::fuzz_target;
use mvrisk::report::Table;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = serde_json::from_str::<Table>(text) {
        let again: Table = serde_json::from_str(&table.to_json()).expect("emitted JSON parses");
        assert_eq!(again.to_json(), table.to_json());
        let _ = table.to_csv();
        let _ = table.to_markdown();
    }
});
