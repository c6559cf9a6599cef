// SPDX-License-Identifier: Apache-2.0
#![no_main]

use casceq::data::TensorContainer;
use casceq::lens::LensWeights;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(c) = TensorContainer::from_bytes(data) else { return };
    if let Ok(v) = LensWeights::from_container(&c) {
        let bytes = v.to_container().to_bytes();
        LensWeights::from_container(&TensorContainer::from_bytes(&bytes).unwrap()).unwrap();
    }
});
