#![no_main]
use libfuzzer_sys::fuzz_target;
use strata_miner_core::report::parse_comparison_csv;

fuzz_target!(|data: &[u8]| {
    let _ = parse_comparison_csv(data);
});
