#![no_main]

use libfuzzer_sys::fuzz_target;
use mcmt_core::reid::head::{parse_checkpoint, write_checkpoint};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(head) = parse_checkpoint("fuzz", text) {
        let again = parse_checkpoint("fuzz", &write_checkpoint(&head)).expect("written checkpoint parses");
        assert_eq!(again.parameters(), head.parameters());
    }
});
