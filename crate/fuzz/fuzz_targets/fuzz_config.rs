#![no_main]

use libfuzzer_sys::fuzz_target;
use rdbounds::analysis::{parse_key_values, AnalysisConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(pairs) = parse_key_values(text) else { return };
    let mut cfg = AnalysisConfig::default();
    if cfg.apply_pairs(&pairs).is_ok() && cfg.validate().is_ok() {
        let _ = cfg.echo();
        if let Ok(grid) = cfg.grid_points() {
            assert!(grid.iter().all(|g| g.is_finite()));
        }
    }
});
