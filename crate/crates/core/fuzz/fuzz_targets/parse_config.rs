#![no_main]

use libfuzzer_sys::fuzz_target;
use mvrisk_cli::config::{parse_config, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(settings) = parse_config(text) {
        if let Ok(cfg) = RunConfig::from_settings(&settings) {
            let window = cfg.options.window;
            assert!(window.max_months >= window.min_months);
            let _ = cfg.effective();
        }
    }
});
