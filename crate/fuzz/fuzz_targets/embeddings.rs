#![no_main]

use libfuzzer_sys::fuzz_target;
use mcmt_core::io::parse_embedding_rows;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((dim, rows)) = parse_embedding_rows("fuzz", text) {
        assert!(rows.iter().all(|(_, v)| v.len() == dim && v.iter().all(|x| x.is_finite())));
    }
});
