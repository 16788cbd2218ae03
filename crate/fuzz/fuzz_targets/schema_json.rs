#![no_main]
use libfuzzer_sys::fuzz_target;
use strata_miner_core::cohort::SchemaConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = SchemaConfig::from_json(text);
    }
});
