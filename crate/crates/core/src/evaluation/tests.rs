use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

const TOL: f64 = 1e-4;

#[test]
fn bleu_examples() {
    assert!((bleu(&["a b c d e"], &["a b c d e"], 4).unwrap().score - 100.0).abs() < TOL);
    let b1 = bleu(&["the cat"], &["the cat sat"], 1).unwrap();
    assert!((b1.score - 100.0 * (-0.5f64).exp()).abs() < TOL);
    assert!((b1.score - 60.653).abs() < 1e-3);
    let disjoint = bleu(&["x y z w"], &["a b c d"], 4).unwrap();
    assert!(disjoint.score < 1.0);
    assert!(matches!(bleu::<&str, &str>(&[], &[], 4), Err(crate::Error::DegenerateBatch(_))));
}

#[test]
fn bleu_short_identity_uses_available_orders() {
    assert!((bleu(&["hi there"], &["hi there"], 4).unwrap().score - 100.0).abs() < 1e-9);
}

#[test]
fn rouge_examples() {
    assert_eq!(rouge_l("a b c", "a b c", 1.0).unwrap().f, 1.0);
    let s = rouge_l("a b c", "a c", 1.0).unwrap();
    assert!((s.precision - 2.0 / 3.0).abs() < TOL && (s.recall - 1.0).abs() < TOL);
    assert!((s.f - 0.8).abs() < TOL);
    assert_eq!(rouge_l("a b", "c d", 1.0).unwrap().f, 0.0);
    assert!(rouge_l("", "a", 1.0).is_err());
}

#[test]
fn ter_examples() {
    assert_eq!(ter("a b c d", "a b c d").unwrap(), 0.0);
    assert!((ter("a b x d", "a b c d").unwrap() - 25.0).abs() < TOL);
    assert!((ter("", "a b c").unwrap() - 100.0).abs() < TOL);
    assert!(ter("a", "").is_err());
}

#[test]
fn ter_counts_a_block_shift_as_one_edit() {
    let e = ter_edits("c d a b", "a b c d", ShiftSearch::Greedy).unwrap();
    assert_eq!((e.shifts, e.edits), (1, 0));
    assert!((ter_exact("c d a b", "a b c d").unwrap() - 25.0).abs() < TOL);
}

#[test]
fn chrf_examples() {
    let unigram = ChrfConfig {
        char_order: 1,
        word_order: 0,
        beta: 2.0,
    };
    assert!((chrf("abc", "abd", &unigram).unwrap() - 200.0 / 3.0).abs() < TOL);
    assert!((chrf("same text", "same text", &ChrfConfig::default()).unwrap() - 100.0).abs() < TOL);
    assert_eq!(chrf("abc", "xyz", &ChrfConfig::default()).unwrap(), 0.0);
    assert!(chrf("", "x", &ChrfConfig::default()).is_err());
}

#[test]
fn slot_accuracy_examples() {
    let lex = crate::conditions::SlotLexicon::car();
    let p = ["your poievent activity is on poidate at poitime"];
    let g = ["you have a poievent activity on poidate at poitime"];
    assert_eq!(slot_answer_accuracy(&p, &g, &lex).unwrap(), 1.0);
    assert_eq!(slot_answer_accuracy(&["poi is here"], &["poi at poiaddress"], &lex).unwrap(), 0.0);
    assert_eq!(slot_answer_accuracy(&["hello"], &["goodbye"], &lex).unwrap(), 1.0);
    assert!(slot_answer_accuracy::<&str, &str>(&[], &[], &lex).is_err());
}

fn bleu4(c: &[&str], r: &[&str]) -> crate::Result<f64> {
    Ok(bleu(c, r, 4)?.score)
}

#[test]
fn bootstrap_examples() {
    let refs: Vec<String> = (0..30).map(|i| format!("the answer is number {i} today")).collect();
    let good = refs.clone();
    let bad: Vec<String> = (0..30).map(|i| format!("an reply was {i}")).collect();
    let same = paired_bootstrap(&good, &good, &refs, bleu4, 200, 1).unwrap();
    assert!(same.p_value > 0.9);
    let dom = paired_bootstrap(&good, &bad, &refs, bleu4, 200, 1).unwrap();
    assert!(dom.p_value < 0.01 && dom.delta > 0.0);
    assert_eq!(dom, paired_bootstrap(&good, &bad, &refs, bleu4, 200, 1).unwrap());
    assert!(matches!(
        paired_bootstrap(&good[..2], &bad, &refs, bleu4, 200, 1),
        Err(crate::Error::Alignment(_))
    ));
    assert!(paired_bootstrap(&good, &bad, &refs, bleu4, 50, 1).is_err());
}

#[test]
fn report_has_all_metrics_and_comparison() {
    let suite = MetricSuite {
        lexicon: Some(crate::conditions::SlotLexicon::car()),
        resamples: 100,
        ..MetricSuite::default()
    };
    let refs: Vec<String> = vec!["poi is poidistance away".into(), "the weather is nice".into()];
    let mut r = suite.report("sys", &refs, &refs).unwrap();
    assert!((r.corpus["bleu4"] - 100.0).abs() < 1e-9);
    assert_eq!(r.corpus["ter"], 0.0);
    assert_eq!(r.corpus.len(), 8);
    let base: Vec<String> = vec!["poi".into(), "weather".into()];
    suite.compare(&mut r, "base", &refs, &base, &refs).unwrap();
    assert_eq!(r.comparison.as_ref().unwrap().p_values.len(), 8);
}

#[test]
fn greedy_shift_search_matches_exhaustive_search_on_short_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (c, r) = perturbed_pair(&mut rng);
        assert_eq!(ter_greedy(&c, &r).unwrap(), ter_exact(&c, &r).unwrap(), "{c} | {r}");
    }
}

fn sentence() -> impl Strategy<Value = String> {
    proptest::collection::vec(proptest::sample::select(vec!["a", "b", "c", "d", "e"]), 1..8).prop_map(|v| v.join(" "))
}

proptest! {
    #[test]
    fn ter_is_zero_on_identity_and_nonnegative(x in sentence(), y in sentence()) {
        prop_assert_eq!(ter(&x, &x).unwrap(), 0.0);
        prop_assert!(ter(&x, &y).unwrap() >= 0.0);
    }

    #[test]
    fn rouge_is_symmetric_for_equal_lengths(x in sentence(), y in sentence()) {
        let n = x.split(' ').count().min(y.split(' ').count());
        let x: String = x.split(' ').take(n).collect::<Vec<_>>().join(" ");
        let y: String = y.split(' ').take(n).collect::<Vec<_>>().join(" ");
        let a = rouge_l(&x, &y, 1.0).unwrap().f;
        let b = rouge_l(&y, &x, 1.0).unwrap().f;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn corpus_scores_are_permutation_consistent(pairs in proptest::collection::vec((sentence(), sentence()), 2..6), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let suite = MetricSuite::default();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let split = |p: &[(String, String)]| -> (Vec<String>, Vec<String>) { p.iter().cloned().unzip() };
        let (c1, r1) = split(&pairs);
        let (c2, r2) = split(&shuffled);
        for m in suite.metrics() {
            let a = suite.score(m, &c1, &r1).unwrap();
            let b = suite.score(m, &c2, &r2).unwrap();
            prop_assert!((a - b).abs() < 1e-9, "{:?}", m);
        }
    }

    #[test]
    fn appending_an_exact_match_never_lowers_bleu(pairs in proptest::collection::vec((sentence(), sentence()), 1..6), extra in sentence()) {
        let (mut c, mut r): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
        let before = bleu(&c, &r, 4).unwrap().score;
        prop_assume!(before < 100.0);
        c.push(extra.clone());
        r.push(extra);
        prop_assert!(bleu(&c, &r, 4).unwrap().score >= before - 1e-9);
    }
}
