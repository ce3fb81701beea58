#![no_main]

use libfuzzer_sys::fuzz_target;
use rdbounds::analysis::{parse_cutoffs, parse_interval};
use rdbounds::decision_model::NoiseDensity;
use rdbounds::{Design, Direction, KernelFamily};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(c) = parse_cutoffs(s) {
        assert!(c.len() >= 2 && c.windows(2).all(|w| w[0] < w[1]));
    }
    if let Ok((lo, hi)) = parse_interval(s) {
        assert!(lo < hi);
    }
    if let Ok(n) = s.parse::<NoiseDensity>() {
        assert!(n.validate().is_ok());
    }
    let _ = s.parse::<Design>();
    let _ = s.parse::<Direction>();
    let _ = s.parse::<KernelFamily>();
});
