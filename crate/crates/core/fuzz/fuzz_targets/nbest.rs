#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::decoder::{read_nbest, FeatureLayout};

fuzz_target!(|data: &[u8]| {
    for layout in [FeatureLayout::new(1, false), FeatureLayout::new(2, true)] {
        let _ = read_nbest(data, &layout);
    }
});
