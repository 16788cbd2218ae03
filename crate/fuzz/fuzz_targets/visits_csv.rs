#![no_main]
use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use strata_miner_core::cohort::{build_cohort, SchemaConfig};

static SCHEMA: OnceLock<SchemaConfig> = OnceLock::new();

fn schema() -> &'static SchemaConfig {
    SCHEMA.get_or_init(|| {
        SchemaConfig::from_json(
            r#"{
                "bmi_column": "bmi",
                "variables": [
                    {"name": "systolic", "kind": "numeric",
                     "labels": ["low", "normal", "high"],
                     "boundaries": [{"value": 98.0, "inclusive": "lower"},
                                    {"value": 166.0, "inclusive": "upper"}]},
                    {"name": "gender", "kind": "categorical",
                     "categories": ["women", "men"], "stratum": true},
                    {"name": "dx_depression", "kind": "ever_flag"}
                ]
            }"#,
        )
        .expect("static schema parses")
    })
}

fuzz_target!(|data: &[u8]| {
    // The whole prepare pipeline: parse, group, label, aggregate, pack.
    let _ = build_cohort(data, schema());
});
