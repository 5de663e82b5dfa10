#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::corpus::{debpe, BpeModel};
use usmt_gec::Sentence;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = BpeModel::read(data) {
        let s = Sentence::from_line("lower newest widest");
        assert_eq!(debpe(&m.apply(&s)), s);
    }
});
