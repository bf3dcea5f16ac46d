#![no_main]

use cfmm_fees::flow::{build_distribution, parse_trades_csv, write_trades_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(records) = parse_trades_csv(text) else { return };
    let again = parse_trades_csv(&write_trades_csv(&records)).expect("written CSV must parse");
    assert_eq!(records.len(), again.len());
    if let Ok(dist) = build_distribution(&records) {
        assert!(dist.mean().is_finite());
    }
});
