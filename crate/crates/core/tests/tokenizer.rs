use proptest::prelude::*;
use twparse::synthetic::{generate_treebank, raw_pairs, SyntheticConfig};
use twparse::tokenizer::{decode_tokens, derive_char_labels, train_tokenizer, CharTag, TokenizerConfig};

#[test]
fn synthetic_corpus_dev_f1() {
    let train = generate_treebank(&SyntheticConfig {
        sentences: 200,
        seed: 11,
        ..SyntheticConfig::default()
    });
    let dev = generate_treebank(&SyntheticConfig {
        sentences: 60,
        seed: 12,
        id_prefix: "dev".into(),
        ..SyntheticConfig::default()
    });
    let cfg = TokenizerConfig {
        epochs: 8,
        ..TokenizerConfig::default()
    };
    let (_, report) = train_tokenizer(&raw_pairs(&train), Some(&raw_pairs(&dev)), &cfg).unwrap();
    assert!(report.best_score >= 99.0, "dev token F1 {}", report.best_score);
}

proptest! {
    #[test]
    fn labels_decode_to_forms(seed in 0u64..500) {
        let tb = generate_treebank(&SyntheticConfig { sentences: 3, seed, tweet_rate: 0.7, ..SyntheticConfig::default() });
        for (raw, s) in raw_pairs(&tb) {
            let tags = derive_char_labels(&raw, &s).unwrap();
            for (c, t) in raw.chars().zip(&tags) {
                prop_assert_eq!(c.is_whitespace(), *t == CharTag::S);
            }
            let toks = decode_tokens(&raw, &tags).unwrap();
            let forms: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
            prop_assert_eq!(forms, s.forms().collect::<Vec<_>>());
            for w in toks.windows(2) {
                prop_assert!(w[0].span.end <= w[1].span.start);
            }
        }
    }
}
