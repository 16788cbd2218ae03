#![no_main]
use libfuzzer_sys::fuzz_target;
use strata_miner_core::synth::{generate, SynthSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = SynthSpec::from_reader(data) else {
        return;
    };
    // Generation is linear in patients x features; keep the fuzz
    // executions bounded.
    if spec.patients <= 128 && spec.features <= 64 && spec.groups.len() <= 8 {
        let _ = generate(&spec);
    }
});
