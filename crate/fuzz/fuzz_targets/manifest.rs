// SPDX-License-Identifier: Apache-2.0
#![no_main]

use casceq::data::Manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Manifest::from_json_slice(data) {
        for t in &m.tasks {
            m.label_space(t).unwrap();
        }
        let again = Manifest::from_json_slice(&serde_json::to_vec(&m).unwrap()).unwrap();
        assert_eq!(again, m);
    }
});
