#![no_main]

use libfuzzer_sys::fuzz_target;
use mcmt_core::io::{parse_tracklet_embeddings, write_tracklet_embeddings};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((dim, rows)) = parse_tracklet_embeddings("fuzz", text) {
        if dim > 0 {
            let written = write_tracklet_embeddings(dim, &rows).expect("parsed rows write");
            assert_eq!(parse_tracklet_embeddings("fuzz", &written).expect("written rows parse"), (dim, rows));
        }
    }
});
