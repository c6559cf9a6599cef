// SPDX-License-Identifier: Apache-2.0
#![no_main]

use casceq::data::{parse_prediction_line, parse_prediction_log, record_to_json_line, LabelSpace};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let space = LabelSpace::new("ag", ["World", "Sports", "Business", "Sci/Tech"].map(String::from).to_vec()).unwrap();
    let log = parse_prediction_log(text, &space);
    assert!(log.records.len() + log.malformed.len() + log.blank_lines == log.lines_in);
    for line in text.lines() {
        if let Ok(rec) = parse_prediction_line(line, &space) {
            let again = parse_prediction_line(&record_to_json_line(&rec, &space), &space).unwrap();
            assert_eq!(again, rec);
        }
    }
});
