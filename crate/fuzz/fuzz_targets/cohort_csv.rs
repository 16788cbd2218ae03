#![no_main]
use libfuzzer_sys::fuzz_target;
use strata_miner_core::cohort::CohortTable;

fuzz_target!(|data: &[u8]| {
    let _ = CohortTable::read_csv(data);
});
