#![no_main]

use inicon::expr::Expr;
use inicon::scenario::Nonlinearity;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(e) = Expr::parse(text) {
        for s in [-3.0, -0.5, 0.0, 0.25, 1.0, 7.5] {
            let _ = e.eval(s);
        }
    }
    if let Ok(q) = Nonlinearity::parse(text) {
        let _ = q.eval(0.5);
    }
});
