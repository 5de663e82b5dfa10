#![no_main]

use libfuzzer_sys::fuzz_target;
use std::sync::OnceLock;

use usmt_gec::decoder::{Decoder, DecoderConfig};
use usmt_gec::lm::{train_lm, LmConfig, NGramLanguageModel};
use usmt_gec::phrase_table::PhraseTable;
use usmt_gec::Sentence;

const TABLE: &str = "\
he ||| he ||| 0.9 0.9 0.9 0.9
go ||| goes ||| 0.6 0.6 0.5 0.5
go ||| go ||| 0.4 0.4 0.5 0.5
go home ||| goes home ||| 0.7 0.6 0.7 0.6
a ||| an ||| 0.3 0.3 0.2 0.2
";

fn models() -> &'static (PhraseTable, NGramLanguageModel) {
    static M: OnceLock<(PhraseTable, NGramLanguageModel)> = OnceLock::new();
    M.get_or_init(|| {
        let corpus: Vec<Sentence> = ["he goes home", "she has an apple", "he goes to school"]
            .iter()
            .map(|s| Sentence::from_line(s))
            .collect();
        let lm = train_lm(&corpus, &LmConfig { order: 3, ..LmConfig::default() }).unwrap().0;
        (PhraseTable::read(TABLE.as_bytes()).unwrap(), lm)
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let source = Sentence::from_line(text);
    if source.len() > 40 {
        return;
    }
    let (table, lm) = models();
    let decoder = Decoder::new(table, vec![lm], None, DecoderConfig { beam: 5, ..DecoderConfig::default() });
    let weights = decoder.layout().default_weights();
    let best = decoder.decode(&weights, &source).unwrap();
    let list = decoder.nbest(&weights, &source, 3).unwrap();
    assert!(!list.is_empty() && list.len() <= 3);
    assert!((list[0].score - best.score).abs() < 1e-9);
});
