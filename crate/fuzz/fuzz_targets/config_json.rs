#![no_main]

use inicon::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(text) {
        // anything accepted must survive a round trip
        let again = RunConfig::from_json(&cfg.to_json()).expect("echoed config rejected");
        assert_eq!(again.to_json(), cfg.to_json());
    }
});
