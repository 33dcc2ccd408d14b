#![no_main]

use libfuzzer_sys::fuzz_target;
use mcmt_core::io::{parse_identity_map, write_identity_map};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_identity_map("fuzz", text) {
        assert_eq!(parse_identity_map("fuzz", &write_identity_map(&rows)).expect("written map parses"), rows);
    }
});
