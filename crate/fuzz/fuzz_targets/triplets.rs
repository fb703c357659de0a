#![no_main]

use inicon::sparsela::CsrMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(a) = CsrMatrix::from_triplet_text(text) {
        let b = CsrMatrix::from_triplet_text(&a.to_triplet_text()).expect("written matrix rejected");
        assert_eq!((a.rows(), a.cols(), a.nnz()), (b.rows(), b.cols(), b.nnz()));
    }
});
