#![no_main]

use libfuzzer_sys::fuzz_target;
use usmt_gec::embeddings::{read_embeddings, write_embeddings};

fuzz_target!(|data: &[u8]| {
    if let Ok((vocab, m)) = read_embeddings(data) {
        let mut out = Vec::new();
        write_embeddings(&vocab, &m, &mut out).unwrap();
        let (v2, m2) = read_embeddings(&out[..]).expect("written embeddings read back");
        assert_eq!(v2.len(), vocab.len());
        assert_eq!(m2.dim(), m.dim());
    }
});
