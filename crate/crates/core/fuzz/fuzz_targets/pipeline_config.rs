#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::pipeline::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = PipelineConfig::parse(text);
    }
});
