#![no_main]
use libfuzzer_sys::fuzz_target;
use strata_miner_core::importance::{score_features, RuleSelection};
use strata_miner_core::rule::RuleRecord;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = serde_json::from_slice::<Vec<RuleRecord>>(data) {
        let report = score_features(&records, RuleSelection::All);
        let _ = score_features(&records, RuleSelection::TopN(3));
        let _ = serde_json::to_vec(&report.scores);
    }
});
