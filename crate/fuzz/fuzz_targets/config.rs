#![no_main]

use libfuzzer_sys::fuzz_target;
use mcmt_cli::config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = config::parse("fuzz", text) {
        let canonical = cfg.canonical();
        assert_eq!(config::parse("fuzz", &canonical).expect("canonical config parses"), cfg);
    }
});
