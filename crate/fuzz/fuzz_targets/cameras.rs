#![no_main]

use libfuzzer_sys::fuzz_target;
use mcmt_core::io::{parse_cameras, write_cameras};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cameras) = parse_cameras("fuzz", text) {
        assert_eq!(parse_cameras("fuzz", &write_cameras(&cameras)).expect("written cameras parse"), cameras);
    }
});
