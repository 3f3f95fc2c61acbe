//! Experiment config parsing, including include resolution.
//!
//!   cargo +nightly fuzz run config_parse fuzz/corpus/config_parse

#![no_main]

use jcdo_core::experiment::{ConfigError, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

// Every include resolves to the same fragment, so nested and cyclic
// includes are reachable.
const FRAGMENT: &str = "include = [\"self.toml\"]\nseed = 1\n";

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let resolve = |inc: &str| -> Result<String, ConfigError> {
        if inc == "self.toml" {
            Ok(FRAGMENT.to_string())
        } else {
            Err(ConfigError::IncludeUnavailable(inc.to_string()))
        }
    };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text, resolve) {
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string(), |inc: &str| {
            Err(ConfigError::IncludeUnavailable(inc.to_string()))
        })
        .expect("a parsed config must reparse");
        assert_eq!(again.to_toml_string(), cfg.to_toml_string());
    }
});
