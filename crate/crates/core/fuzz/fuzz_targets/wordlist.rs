#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::spellcheck::{correct_token, WordList};

fuzz_target!(|data: &[u8]| {
    if let Ok(list) = WordList::read(data) {
        let _ = correct_token("teh", &list);
    }
});
