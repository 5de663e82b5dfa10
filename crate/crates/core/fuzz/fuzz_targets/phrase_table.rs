#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::phrase_table::PhraseTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = PhraseTable::read(data) {
        let mut out = Vec::new();
        t.write(&mut out).unwrap();
        let again = PhraseTable::read(&out[..]).expect("written table reads back");
        assert_eq!(again.len(), t.len());
    }
});
