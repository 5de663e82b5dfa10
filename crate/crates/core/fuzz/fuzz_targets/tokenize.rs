#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::corpus::tokenize;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let s = tokenize(text);
        assert!(s.iter().all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
    }
});
