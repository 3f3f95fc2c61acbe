//! Per-round metrics CSV parsing.
//!
//!   cargo +nightly fuzz run metrics_parse fuzz/corpus/metrics_parse

#![no_main]

use jcdo_core::experiment::{parse_metrics, write_metrics};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_metrics(text) {
        let mut buf = Vec::new();
        write_metrics(&rows, &mut buf).expect("writing to memory");
        let again = parse_metrics(std::str::from_utf8(&buf).expect("CSV output is UTF-8")).expect("written rows must reparse");
        assert_eq!(again.len(), rows.len());
    }
});
