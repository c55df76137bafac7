mod common;

use common::{harmonic_f1, random_case, reference, reference_attachment};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twparse::conllu::Treebank;
use twparse::eval::{
    attachment_scores, pipeline_counts, pipeline_scores, tagging_counts, tagging_scores, token_counts,
    token_span_f1,
};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn token_and_tag_scores_match_reference(seed in any::<u64>()) {
        let c = random_case(&mut ChaCha8Rng::seed_from_u64(seed));
        let r = reference(&c);
        let tok = token_counts(&c.gold, &c.pred, &c.raw).unwrap();
        prop_assert_eq!((tok.correct, tok.gold, tok.predicted), r.tok);
        let report = token_span_f1(&c.gold, &c.pred, &c.raw).unwrap();
        prop_assert!(close(report.f1.unwrap(), harmonic_f1(r.tok.0, r.tok.1, r.tok.2)));

        let tag = tagging_counts(&c.gold, &c.pred, Some(&c.raw)).unwrap();
        prop_assert_eq!((tag.correct, tag.gold, tag.predicted), r.tag);
        let report = tagging_scores(&c.gold, &c.pred, Some(&c.raw)).unwrap();
        prop_assert!(close(report.f1.unwrap(), harmonic_f1(r.tag.0, r.tag.1, r.tag.2)));
    }

    #[test]
    fn pipeline_scores_match_reference(seed in any::<u64>()) {
        let c = random_case(&mut ChaCha8Rng::seed_from_u64(seed));
        let r = reference(&c);
        let (u, l) = pipeline_counts(&c.gold, &c.pred, &c.raw).unwrap();
        prop_assert_eq!(u.correct, r.pipe_unlabelled);
        prop_assert_eq!(l.correct, r.pipe_labelled);
        let report = pipeline_scores(
            &Treebank::new(vec![c.gold.clone()]),
            &Treebank::new(vec![c.pred.clone()]),
        )
        .unwrap();
        let (g, p) = (c.gold.len(), c.pred.len());
        prop_assert!(close(report.uas.unwrap(), harmonic_f1(r.pipe_unlabelled, g, p)));
        prop_assert!(close(report.las.unwrap(), harmonic_f1(r.pipe_labelled, g, p)));
        prop_assert!(report.las.unwrap() <= report.uas.unwrap());
    }

    #[test]
    fn gold_token_scores_match_reference(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = loop {
            let c = random_case(&mut rng);
            if c.gold.len() == c.pred.len() {
                break c;
            }
        };
        let acc = tagging_scores(&c.gold, &c.pred, None).unwrap().accuracy.unwrap();
        let same = c.gold.tokens.iter().zip(&c.pred.tokens).filter(|(g, p)| g.upos == p.upos).count();
        prop_assert!(close(acc, 100.0 * same as f64 / c.gold.len() as f64));

        let report = attachment_scores(
            &Treebank::new(vec![c.gold.clone()]),
            &Treebank::new(vec![c.pred.clone()]),
        )
        .unwrap();
        let (h, l, n) = reference_attachment(&c.gold, &c.pred);
        prop_assert!(close(report.uas.unwrap(), 100.0 * h as f64 / n as f64));
        prop_assert!(close(report.las.unwrap(), 100.0 * l as f64 / n as f64));
        prop_assert!(report.las.unwrap() <= report.uas.unwrap());
    }
}

#[test]
fn gold_against_itself_is_perfect() {
    let tb = twparse::synthetic::generate_treebank(&Default::default());
    let r = attachment_scores(&tb, &tb).unwrap();
    assert_eq!((r.uas, r.las), (Some(100.0), Some(100.0)));
    let p = pipeline_scores(&tb, &tb).unwrap();
    assert_eq!(p.las, Some(100.0));
}
