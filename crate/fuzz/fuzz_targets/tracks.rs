#![no_main]

use libfuzzer_sys::fuzz_target;
use mcmt_core::io::{parse_tracks, write_tracks};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_tracks("fuzz", text) {
        let written = write_tracks(&records).expect("parsed tracks write");
        assert_eq!(parse_tracks("fuzz", &written).expect("written tracks parse"), records);
    }
});
