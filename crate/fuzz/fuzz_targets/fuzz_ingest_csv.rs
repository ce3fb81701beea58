#![no_main]

use libfuzzer_sys::fuzz_target;
use rdbounds::analysis::{ingest_reader, ColumnMap};
use rdbounds::Design;

fuzz_target!(|data: &[u8]| {
    let map = ColumnMap::default();
    for design in [Design::Sharp, Design::Fuzzy] {
        if let Ok(rows) = ingest_reader(data, &map, &[1.0, 2.25], design) {
            for r in &rows {
                assert!(r.y.is_finite() && r.x.is_finite());
                assert!(r.c == 1.0 || r.c == 2.25);
                if design == Design::Sharp {
                    assert_eq!(r.d, r.x >= r.c);
                } else {
                    assert!(!r.d || r.x >= r.c);
                }
            }
        }
    }
});
