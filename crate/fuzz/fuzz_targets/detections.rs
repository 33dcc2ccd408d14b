#![no_main]

use libfuzzer_sys::fuzz_target;
use mcmt_core::io::{parse_detections, write_detections};

// detection text, optionally followed by a NUL and the embedding sidecar
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (det, emb) = match text.split_once('\0') {
        Some((d, e)) => (d, Some(e)),
        None => (text, None),
    };
    if let Ok(set) = parse_detections("fuzz", det, emb, 1) {
        let (det2, emb2) = write_detections(&set);
        let again = parse_detections("fuzz", &det2, emb2.as_deref(), 1).expect("written detections parse");
        assert_eq!(again.detections.len(), set.detections.len());
    }
});
