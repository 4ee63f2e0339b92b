//! Replays the config-parser fuzz corpus under plain `cargo test`.

use std::fs;
use std::path::PathBuf;

use mvrisk_cli::config::{parse_config, RunConfig};

#[test]
fn config_seeds() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fuzz/corpus/parse_config");
    let mut valid = 0;
    let mut rejected = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        match parse_config(&text).map(|s| RunConfig::from_settings(&s)) {
            Ok(Ok(cfg)) => {
                assert!(cfg.options.window.max_months >= cfg.options.window.min_months);
                let _ = cfg.effective();
                valid += 1;
            }
            _ => rejected += 1,
        }
    }
    assert!(valid >= 2 && rejected >= 1, "{valid} valid, {rejected} rejected");
}
