//! Run summary parsing.
//!
//!   cargo +nightly fuzz run summary_parse fuzz/corpus/summary_parse

#![no_main]

use jcdo_core::experiment::{parse_summary, summary_to_toml};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(summary) = parse_summary(text) {
        let written = summary_to_toml(&summary);
        let again = parse_summary(&written).expect("a written summary must reparse");
        assert_eq!(summary_to_toml(&again), written);
    }
});
