#![no_main]

use cfmm_fees::flow::{normalize_snapshots_with, parse_pool_snapshots, BALANCE_TOLERANCE};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(snapshots) = parse_pool_snapshots(text) else { return };
    if let Ok(normalized) = normalize_snapshots_with(&snapshots, BALANCE_TOLERANCE) {
        assert!(normalized.target_price.is_finite() && normalized.target_price > 0.0);
        assert_eq!(normalized.market.len(), snapshots.len());
    }
});
