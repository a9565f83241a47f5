use proptest::prelude::*;
use suma_core::alignment::{apply_control, balanced_bipartitions, fold_ranges, ControlCondition};
use suma_core::config::KvConfig;
use suma_core::decoder::LrSchedule;
use suma_core::numerics::{linear_cka, pearson_r, rdm_similarity, welch_t};
use suma_core::tokenizer::{bpe_train, word_tokenize, Tokenizer, Vocab};
use suma_core::RealMatrix;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = RealMatrix> {
    prop::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |d| RealMatrix::new(rows, cols, d).unwrap())
}

fn small_vocab() -> Vocab {
    bpe_train(&["the quick brown fox", "jumps over the lazy dog", "the dog barks"], 290).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bpe_round_trips_any_utf8(s in "\\PC{0,40}") {
        let v = small_vocab();
        let ids = v.encode(&s).ids;
        prop_assert_eq!(v.decode(&ids).unwrap(), s);
    }

    #[test]
    fn vocab_text_round_trip(extra in 258usize..320) {
        let v = bpe_train(&["aaa bbb aaa ccc", "abc abc"], extra).unwrap();
        prop_assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
    }

    #[test]
    fn word_tokens_never_contain_whitespace(s in "[a-z ,.!?\\t]{0,40}") {
        for w in word_tokenize(&s) {
            prop_assert!(!w.is_empty());
            prop_assert!(!w.chars().any(char::is_whitespace));
        }
    }

    #[test]
    fn pearson_is_bounded_and_affine_invariant(
        a in prop::collection::vec(-5.0f64..5.0, 8..30),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * x + (i as f64).sin()).collect();
        if let (Ok(r1), Ok(r2)) = (pearson_r(&a, &b), pearson_r(&a.iter().map(|x| scale * x + shift).collect::<Vec<_>>(), &b)) {
            prop_assert!(r1.abs() <= 1.0 + 1e-12);
            prop_assert!((r1 - r2).abs() < 1e-9);
        }
    }

    #[test]
    fn welch_t_is_antisymmetric(
        a in prop::collection::vec(-5.0f64..5.0, 2..20),
        b in prop::collection::vec(-5.0f64..5.0, 2..20),
    ) {
        let ab = welch_t(&a, &b).unwrap();
        let ba = welch_t(&b, &a).unwrap();
        prop_assert!((ab.t + ba.t).abs() < 1e-9 || (ab.t.is_infinite() && ab.t == -ba.t));
        prop_assert!((ab.dof - ba.dof).abs() < 1e-9);
    }

    #[test]
    fn cka_is_symmetric_and_bounded(x in matrix(12, 4), y in matrix(12, 3)) {
        if let (Ok(xy), Ok(yx)) = (linear_cka(&x, &y), linear_cka(&y, &x)) {
            prop_assert!((xy - yx).abs() < 1e-10);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&xy));
        }
    }

    #[test]
    fn rdm_similarity_is_symmetric(x in matrix(8, 5), y in matrix(8, 5)) {
        if let (Ok(xy), Ok(yx)) = (rdm_similarity(&x, &y), rdm_similarity(&y, &x)) {
            prop_assert!((xy - yx).abs() < 1e-10);
        }
    }

    #[test]
    fn folds_partition_the_range(n in 1usize..500, folds in 1usize..20) {
        let f = fold_ranges(n, folds);
        prop_assert_eq!(f.len(), folds);
        prop_assert_eq!(f[0].0, 0);
        prop_assert_eq!(f[folds - 1].1, n);
        for w in f.windows(2) {
            prop_assert_eq!(w[0].1, w[1].0);
        }
    }

    #[test]
    fn bipartitions_are_balanced(n in 2usize..20, seed in any::<u64>()) {
        for half in balanced_bipartitions(n, seed) {
            prop_assert_eq!(half.len(), n / 2);
            let mut sorted = half.clone();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), half.len());
            prop_assert!(half.iter().all(|&i| i < n));
        }
    }

    #[test]
    fn controls_preserve_length(ids in prop::collection::vec(0u32..290, 0..30), seed in any::<u64>(), idx in 0u64..100) {
        let tok = Tokenizer::Bpe(small_vocab());
        let shuffled = apply_control(&ids, ControlCondition::Shuffled, seed, idx, &tok);
        let mut a = ids.clone();
        let mut b = shuffled.clone();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        let random = apply_control(&ids, ControlCondition::RandomSameLength, seed, idx, &tok);
        prop_assert_eq!(random.len(), ids.len());
        prop_assert!(random.iter().all(|&t| (t as usize) < small_vocab().len()));
    }

    #[test]
    fn schedule_stays_in_range(peak in 1e-5f64..1.0, warmup in 0usize..100, extra in 1usize..1000, step in 0usize..2000) {
        let s = LrSchedule { peak, warmup, total: warmup + extra };
        let lr = s.lr(step);
        prop_assert!((0.0..=peak).contains(&lr));
    }

    #[test]
    fn kv_config_render_round_trip(entries in prop::collection::btree_map("[a-z][a-z._]{0,10}", "[a-zA-Z0-9,._-]{0,12}", 0..10)) {
        let mut kv = KvConfig::new();
        for (k, v) in &entries {
            kv.set(k, v);
        }
        prop_assert_eq!(KvConfig::parse(&kv.render()).unwrap(), kv);
    }
}
