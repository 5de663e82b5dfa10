#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::lm::WordClassMap;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = WordClassMap::read(data) {
        let _ = m.map_tokens(&["a", "b"]);
        let mut out = Vec::new();
        m.write(&mut out).unwrap();
        assert_eq!(WordClassMap::read(&out[..]).expect("written map reads back").len(), m.len());
    }
});
