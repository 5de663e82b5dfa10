#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::corpus::TruecaseModel;
use usmt_gec::Sentence;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = TruecaseModel::read(data) {
        let _ = m.apply(&Sentence::from_line("The cat sat"));
    }
});
