#![no_main]

use inicon::forward::BoundaryRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rec) = BoundaryRecord::from_csv(text) {
        let back = BoundaryRecord::from_csv(&rec.to_csv()).expect("written record rejected");
        assert_eq!(back.nodes, rec.nodes);
        assert_eq!(back.times.len(), rec.times.len());
    }
});
