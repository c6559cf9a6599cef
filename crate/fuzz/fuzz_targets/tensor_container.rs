// SPDX-License-Identifier: Apache-2.0
#![no_main]

use casceq::data::TensorContainer;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = TensorContainer::from_bytes(data) {
        let bytes = c.to_bytes();
        let again = TensorContainer::from_bytes(&bytes).unwrap();
        assert_eq!(again.to_bytes(), bytes);
    }
});
