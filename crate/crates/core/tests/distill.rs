use proptest::prelude::*;
use twparse::conllu::Treebank;
use twparse::distill::{
    average, distillation_loss, load_ensemble, sha256_hex, write_manifest, DistillError, Ensemble, ManifestEntry,
};
use twparse::encoder::EncoderVocab;
use twparse::parser::{ActionDistribution, ParserConfig, ParserModel};
use twparse::synthetic::{generate_treebank, SyntheticConfig};
use twparse::transition::{ActionInventory, ParserState};

fn small_config(seed: u64) -> ParserConfig {
    ParserConfig {
        word_dim: 6,
        char_dim: 4,
        char_hidden: 4,
        upos_dim: 4,
        hidden: 6,
        mlp_hidden: 8,
        action_dim: 4,
        min_word_count: 1,
        min_char_count: 1,
        seed,
        ..ParserConfig::default()
    }
}

fn corpus() -> Treebank {
    generate_treebank(&SyntheticConfig {
        sentences: 6,
        seed: 5,
        ..Default::default()
    })
}

fn member(tb: &Treebank, seed: u64) -> ParserModel {
    ParserModel::new(
        EncoderVocab::build(tb, 1, 1),
        ActionInventory::from_treebank(tb),
        &small_config(seed),
    )
    .unwrap()
}

fn distribution() -> impl Strategy<Value = ActionDistribution> {
    prop::collection::vec(-6.0f64..6.0, 2..8).prop_map(|logits| {
        let support = (0..logits.len()).collect();
        ActionDistribution::from_logits(&logits, support)
    })
}

fn same_size(d: &ActionDistribution) -> impl Strategy<Value = ActionDistribution> {
    let n = d.probs().len();
    prop::collection::vec(-6.0f64..6.0, n).prop_map(move |l| ActionDistribution::from_logits(&l, (0..n).collect()))
}

fn entropy(p: &ActionDistribution) -> f64 {
    -p.probs().iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

proptest! {
    #[test]
    fn loss_bounds_and_identities(
        (q, p) in distribution().prop_flat_map(|q| { let p = same_size(&q); (Just(q), p) }),
        alpha in 0.0f64..=1.0,
        gold_pick in any::<prop::sample::Index>(),
    ) {
        let gold = gold_pick.index(q.probs().len());
        let l = distillation_loss(&q, &p, Some(gold), alpha).unwrap();
        prop_assert!(l.value >= alpha * entropy(&p) - 1e-12);

        let log_loss = -q.prob(gold).ln();
        let l0 = distillation_loss(&q, &p, Some(gold), 0.0).unwrap();
        prop_assert!((l0.value - log_loss).abs() <= 4.0 * f64::EPSILON * log_loss.max(1.0));
        let mut onehot = vec![0.0; q.probs().len()];
        onehot[gold] = 1.0;
        let t = ActionDistribution::from_probs(&onehot, q.support().to_vec());
        let l1 = distillation_loss(&q, &t, None, 1.0).unwrap();
        prop_assert!((l1.value - log_loss).abs() <= 4.0 * f64::EPSILON * log_loss.max(1.0));
        prop_assert_eq!(&l1.grad, &l0.grad);
    }

    #[test]
    fn uniform_self_loss_is_log_k(k in 1usize..50) {
        let u = ActionDistribution::from_logits(&vec![0.0; k], (0..k).collect());
        let l = distillation_loss(&u, &u, None, 1.0).unwrap();
        prop_assert!((l.value - (k as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences(
        logits in prop::collection::vec(-4.0f64..4.0, 2..7),
        target in prop::collection::vec(0.01f64..1.0, 7),
        alpha in prop::sample::select(vec![0.0, 0.5, 0.9, 1.0]),
    ) {
        let n = logits.len();
        let support: Vec<usize> = (0..n).collect();
        let p = ActionDistribution::from_probs(&target[..n], support.clone());
        let loss = |l: &[f64]| {
            let q = ActionDistribution::from_logits(l, support.clone());
            distillation_loss(&q, &p, Some(0), alpha).unwrap()
        };
        let analytic = loss(&logits).grad;
        for i in 0..n {
            let mut up = logits.clone();
            let mut down = logits.clone();
            up[i] += 1e-5;
            down[i] -= 1e-5;
            let numeric = (loss(&up).value - loss(&down).value) / 2e-5;
            prop_assert!((numeric - analytic[i]).abs() < 1e-6, "{} vs {}", numeric, analytic[i]);
        }
    }

    #[test]
    fn averaging_ignores_member_order(
        dists in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..6),
        shift in 0usize..6,
    ) {
        let support = vec![0, 2, 3];
        let members: Vec<ActionDistribution> =
            dists.iter().map(|l| ActionDistribution::from_logits(l, support.clone())).collect();
        let mut rotated = members.clone();
        rotated.rotate_left(shift % members.len());
        rotated.reverse();
        prop_assert_eq!(average(&members), average(&rotated));
        let avg = average(&members);
        prop_assert!((avg.sum() - 1.0).abs() < 1e-12);
        prop_assert_eq!(avg.prob(1), 0.0);
    }
}

#[test]
fn identical_members_reproduce_the_member() {
    let tb = corpus();
    let m = member(&tb, 3);
    let single = Ensemble::new(vec![m.clone()]).unwrap();
    let many = Ensemble::new(vec![m.clone(); 5]).unwrap();
    for s in &tb.sentences {
        let mut solo = m.session(s).unwrap();
        let mut a = single.session(s).unwrap();
        let mut b = many.session(s).unwrap();
        let mut st = ParserState::initial(s.len()).unwrap();
        while !st.is_terminal() {
            let d = solo.distribution(&st).unwrap();
            assert_eq!(a.distribution(&st).unwrap(), d);
            assert_eq!(b.distribution(&st).unwrap(), d);
            st.apply(m.inventory().action(d.argmax()), m.inventory()).unwrap();
        }
        assert_eq!(single.ensemble_parse(s).unwrap(), m.greedy_parse(s).unwrap());
    }
}

#[test]
fn member_order_does_not_matter() {
    let tb = corpus();
    let members: Vec<ParserModel> = (0..3).map(|k| member(&tb, k)).collect();
    let mut reversed = members.clone();
    reversed.reverse();
    let a = Ensemble::new(members).unwrap();
    let b = Ensemble::new(reversed).unwrap();
    for s in &tb.sentences {
        assert_eq!(a.ensemble_parse(s).unwrap(), b.ensemble_parse(s).unwrap());
    }
}

#[test]
fn incompatible_members_are_rejected() {
    let tb = corpus();
    let other = generate_treebank(&SyntheticConfig {
        sentences: 3,
        seed: 99,
        ..Default::default()
    });
    let err = Ensemble::new(vec![member(&tb, 0), member(&other, 1)]).unwrap_err();
    assert!(matches!(err, DistillError::IncompatibleMember(1)));
}

#[test]
fn manifest_loading_verifies_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let tb = corpus();
    let mut entries = Vec::new();
    for k in 0..2 {
        let bytes = member(&tb, k).to_bytes().unwrap();
        let name = format!("member{k}.model");
        std::fs::write(dir.path().join(&name), &bytes).unwrap();
        entries.push(ManifestEntry {
            path: name.into(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = dir.path().join("ensemble.tsv");
    write_manifest(std::fs::File::create(&manifest).unwrap(), &entries).unwrap();
    let e = load_ensemble(&manifest).unwrap();
    assert_eq!(e.len(), 2);

    std::fs::write(dir.path().join("member1.model"), member(&tb, 7).to_bytes().unwrap()).unwrap();
    assert!(matches!(load_ensemble(&manifest), Err(DistillError::Checksum(_))));
}
