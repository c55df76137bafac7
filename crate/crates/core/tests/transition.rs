use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twparse::conllu::{validate_sentence, Sentence};
use twparse::synthetic::{random_projective_heads, random_tree_heads, sentence_from_heads};
use twparse::transition::{
    extract_tree, is_projective, oracle_sequence, replay, ActionInventory, ParserState, TransitionError,
};

const LABELS: [&str; 4] = ["nsubj", "obj", "amod", "punct"];

fn inventory() -> ActionInventory {
    ActionInventory::new(LABELS)
}

/// Projectivity by definition: every word between a head and its
/// dependent is dominated by the head.
fn projective_by_definition(heads: &[usize]) -> bool {
    let dominates = |h: usize, mut w: usize| {
        while w != 0 {
            if w == h {
                return true;
            }
            w = heads[w - 1];
        }
        h == 0
    };
    heads.iter().enumerate().all(|(i, &h)| {
        let d = i + 1;
        (h.min(d) + 1..h.max(d)).all(|w| dominates(h, w))
    })
}

fn tree(heads: &[usize], seed: u64) -> Sentence {
    sentence_from_heads(heads, &LABELS, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #[test]
    fn random_walks_take_two_n_steps(n in 1usize..30, seed in any::<u64>()) {
        let inv = inventory();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut st = ParserState::initial(n).unwrap();
        let mut steps = 0;
        while !st.is_terminal() {
            let valid = st.valid_actions(&inv).unwrap();
            prop_assert!(!valid.is_empty(), "dead end after {steps} steps");
            st.apply(*valid.choose(&mut rng).unwrap(), &inv).unwrap();
            prop_assert!(st.invariants_hold());
            steps += 1;
        }
        prop_assert_eq!(steps, 2 * n);
        let template = tree(&vec![0; n], seed);
        let parsed = extract_tree(&st, &template, &inv).unwrap();
        prop_assert!(validate_sentence(&parsed).is_empty());
        prop_assert!(is_projective(&parsed));
        prop_assert!(matches!(st.apply(twparse::transition::Action::SHIFT, &inv), Err(TransitionError::Terminal)));
    }

    #[test]
    fn oracle_reconstructs_projective_trees(n in 1usize..40, seed in any::<u64>()) {
        let inv = inventory();
        let heads = random_projective_heads(n, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(projective_by_definition(&heads));
        let gold = tree(&heads, seed);
        let actions = oracle_sequence(&gold, &inv).unwrap();
        prop_assert_eq!(actions.len(), 2 * n);
        let st = replay(n, &actions, &inv).unwrap();
        prop_assert_eq!(extract_tree(&st, &gold, &inv).unwrap(), gold);
    }

    #[test]
    fn oracle_fails_exactly_on_non_projective_trees(n in 1usize..12, seed in any::<u64>()) {
        let inv = inventory();
        let heads = random_tree_heads(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let gold = tree(&heads, seed);
        let expected = projective_by_definition(&heads);
        prop_assert_eq!(is_projective(&gold), expected);
        match oracle_sequence(&gold, &inv) {
            Ok(actions) => {
                prop_assert!(expected);
                let st = replay(n, &actions, &inv).unwrap();
                prop_assert_eq!(extract_tree(&st, &gold, &inv).unwrap(), gold);
            }
            Err(TransitionError::NonProjective { .. }) => prop_assert!(!expected),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}
