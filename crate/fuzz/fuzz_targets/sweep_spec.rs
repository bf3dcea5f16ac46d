#![no_main]

use cfmm_fees::SweepSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = SweepSpec::from_json(text) else { return };
    let _ = spec.validate();
    let _ = spec.market();
});
