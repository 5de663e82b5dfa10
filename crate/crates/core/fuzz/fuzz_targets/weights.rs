#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::decoder::{FeatureLayout, Weights};

fuzz_target!(|data: &[u8]| {
    if let Ok(w) = Weights::read(data) {
        let _ = w.aligned_to(&FeatureLayout::new(1, true));
        let mut out = Vec::new();
        w.write(&mut out).unwrap();
        assert_eq!(Weights::read(&out[..]).expect("written weights read back"), w);
    }
});
