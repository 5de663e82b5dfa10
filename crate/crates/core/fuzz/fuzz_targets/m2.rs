#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::metrics::{read_m2, write_m2};

fuzz_target!(|data: &[u8]| {
    if let Ok(sentences) = read_m2(data) {
        let mut out = Vec::new();
        write_m2(&mut out, &sentences).unwrap();
        let again = read_m2(&out[..]).expect("written M2 reads back");
        assert_eq!(again, sentences);
        for s in &sentences {
            let _ = s.corrected();
        }
    }
});
