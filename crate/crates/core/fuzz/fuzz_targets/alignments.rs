#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::alignment::{format_links, parse_links};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for line in text.lines() {
            if let Ok(links) = parse_links(line) {
                assert_eq!(parse_links(&format_links(&links)), Ok(links));
            }
        }
    }
});
