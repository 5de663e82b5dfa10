#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::lm::NGramLanguageModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(lm) = NGramLanguageModel::read_arpa(data) {
        let mut out = Vec::new();
        lm.write_arpa(&mut out).unwrap();
        let again = NGramLanguageModel::read_arpa(&out[..]).expect("written ARPA reads back");
        assert_eq!(again.order(), lm.order());
    }
});
