// SPDX-License-Identifier: Apache-2.0
#![no_main]

use casceq::signal::{decode_wav, encode_wav};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(w) = decode_wav(data) {
        assert!(w.samples().iter().all(|s| s.is_finite() && s.abs() <= 1.0));
        let again = decode_wav(&encode_wav(&w).unwrap()).unwrap();
        assert_eq!(again.len(), w.len());
    }
});
