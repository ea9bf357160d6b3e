use std::time::Instant;

use memgat::conditions::{poi_loss, SlotLexicon};
use memgat::evaluation::{bleu, chrf, perturbed_pair, rouge_l, ter, ter_exact, ter_greedy, ChrfConfig};
use memgat::tensor::{finite_difference_check, primitive_cases, PrimitiveCase};
use memgat::transformer::{MemoryAugmentedTransformer, ModelConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const GRADIENT_EPS: f64 = 1e-5;
pub const METRIC_TOLERANCE: f64 = 1e-4;
pub const POI_TOLERANCE: f64 = 1e-12;
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SelfcheckReport {
    pub checks: Vec<CheckResult>,
    pub seconds: f64,
}

impl SelfcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

/// Finite-difference check of one case; the detail names the worst coordinate.
pub fn check_case(case: &mut PrimitiveCase) -> CheckResult {
    let name = format!("gradient:{}", case.name);
    match case.check(GRADIENT_EPS) {
        Ok(r) => CheckResult {
            name,
            passed: r.max_relative_error < GRADIENT_TOLERANCE,
            detail: format!(
                "max relative error {:.2e} at {}[{}] (analytic {:.6e}, numeric {:.6e})",
                r.max_relative_error, r.worst_parameter, r.worst_index, r.analytic, r.numeric
            ),
        },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Worst relative error of a one-layer generator (d_model 8, 2 heads,
/// vocabulary 20) under cross-entropy with memory attached.
pub fn generator_gradient_error() -> memgat::Result<f64> {
    let mut cfg = ModelConfig::tiny(20, 8, 2, 1);
    cfg.max_seq_len = 16;
    cfg.max_memory_len = 16;
    let mut m = MemoryAugmentedTransformer::<f64>::new(cfg, 21)?;
    let r = finite_difference_check(&mut m, GRADIENT_EPS, |m, g| {
        let logits = m.forward(g, &[4, 5, 6], &[7, 8], &[1, 9, 10])?;
        g.cross_entropy(logits, &[9, 10, 2], 0)
    })?;
    Ok(r.max_relative_error)
}

/// `(name, computed, expected)` for the hand-worked metric examples.
pub fn metric_oracles() -> memgat::Result<Vec<(&'static str, f64, f64)>> {
    let unigram = ChrfConfig {
        char_order: 1,
        word_order: 0,
        beta: 2.0,
    };
    Ok(vec![
        ("bleu4_identity", bleu(&["a b c d e"], &["a b c d e"], 4)?.score, 100.0),
        ("bleu1_brevity", bleu(&["the cat"], &["the cat sat"], 1)?.score, 100.0 * (-0.5f64).exp()),
        ("rouge_l_f", rouge_l("a b c", "a c", 1.0)?.f, 0.8),
        ("ter_substitution", ter("a b x d", "a b c d")?, 25.0),
        ("ter_block_shift", ter("c d a b", "a b c d")?, 25.0),
        ("ter_empty_candidate", ter("", "a b c")?, 100.0),
        ("chrf_unigram", chrf("abc", "abd", &unigram)?, 200.0 / 3.0),
        ("chrf_identity", chrf("same text", "same text", &ChrfConfig::default())?, 100.0),
    ])
}

/// Pairs on which greedy and exact TER disagree, out of `n` perturbation
/// pairs with references of at most 10 words.
pub fn ter_mismatches(n: usize, seed: u64) -> memgat::Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..n {
        let (c, r) = perturbed_pair(&mut rng);
        bad += (ter_greedy(&c, &r)? != ter_exact(&c, &r)?) as usize;
    }
    Ok(bad)
}

/// Counting oracle for the POI loss: sets by sorting, `F1 = 2·TP / (|P| + |M|)`,
/// loss 0 when the memory names nothing.
fn poi_oracle(predicted: &[String], memory: &[String], names: &[String]) -> f64 {
    fn set<'a>(xs: &'a [String], names: &[String]) -> Vec<&'a String> {
        let mut v: Vec<&String> = xs.iter().filter(|x| names.contains(x)).collect();
        v.sort();
        v.dedup();
        v
    }
    let (p, m) = (set(predicted, names), set(memory, names));
    if m.is_empty() {
        return 0.0;
    }
    let tp = p.iter().filter(|x| m.contains(x)).count();
    1.0 - 2.0 * tp as f64 / (p.len() + m.len()) as f64
}

/// Largest gap between the POI loss and the counting oracle over `n` random
/// pairs; empty prediction and memory sets are drawn on purpose.
pub fn poi_oracle_gap(n: usize, seed: u64) -> f64 {
    let lexicon = SlotLexicon::car();
    let names = lexicon.names().to_vec();
    let filler = ["is", "at", "the", "away", "miles"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<String> {
            let k = rng.gen_range(0..=names.len());
            let mut v: Vec<String> = (0..k).map(|_| names.choose(rng).expect("non-empty").clone()).collect();
            for _ in 0..rng.gen_range(0..4) {
                v.push(filler.choose(rng).expect("non-empty").to_string());
            }
            v.shuffle(rng);
            v
        };
        let (p, m) = (draw(&mut rng), draw(&mut rng));
        let got = poi_loss(&p, &m, &lexicon);
        worst = worst.max((got - poi_oracle(&p, &m, &names)).abs());
    }
    worst
}

/// Largest gap between a memory model run with empty memory and the same
/// weights without the memory branch, over encoder states and decoder
/// logits of `n` random inputs.
pub fn empty_memory_gap(n: usize, seed: u64) -> memgat::Result<f64> {
    let vocab = 30;
    let mut cfg = ModelConfig::tiny(vocab, 16, 4, 2);
    cfg.max_seq_len = 16;
    let with = MemoryAugmentedTransformer::<f64>::new(cfg, seed)?;
    let without = with.without_memory_branch()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let len = rng.gen_range(1..12);
        let x: Vec<usize> = (0..len).map(|_| rng.gen_range(4..vocab)).collect();
        let a = with.encode(&x, &[])?;
        let b = without.encode(&x, &[])?;
        worst = worst.max(a.max_abs_diff(&b));
        let prefix: Vec<usize> = std::iter::once(1).chain((0..3).map(|_| rng.gen_range(4..vocab))).collect();
        let la = with.decode(&prefix, &a, &[])?;
        let lb = without.decode(&prefix, &b, &[])?;
        worst = worst.max(la.max_abs_diff(&lb));
    }
    Ok(worst)
}

/// Gradient checks on every primitive (plus `extra` cases), a full
/// generator, metric oracles, POI oracle and empty-memory equivalence.
pub fn run_selfcheck(extra: Vec<PrimitiveCase>) -> SelfcheckReport {
    let start = Instant::now();
    let mut report = SelfcheckReport::default();
    for mut case in primitive_cases().into_iter().chain(extra) {
        report.checks.push(check_case(&mut case));
    }
    match generator_gradient_error() {
        Ok(e) => report.push("gradient:generator", e < GRADIENT_TOLERANCE, format!("max relative error {e:.2e}")),
        Err(e) => report.push("gradient:generator", false, e.to_string()),
    }
    match metric_oracles() {
        Ok(rows) => {
            for (name, got, want) in rows {
                report.push(
                    format!("metric:{name}"),
                    (got - want).abs() < METRIC_TOLERANCE,
                    format!("{got:.6} vs {want:.6}"),
                );
            }
        }
        Err(e) => report.push("metric", false, e.to_string()),
    }
    match ter_mismatches(200, 5) {
        Ok(bad) => report.push("metric:ter_greedy_vs_exact", bad == 0, format!("{bad} of 200 pairs differ")),
        Err(e) => report.push("metric:ter_greedy_vs_exact", false, e.to_string()),
    }
    let gap = poi_oracle_gap(200, 3);
    report.push("poi:oracle", gap <= POI_TOLERANCE, format!("max gap {gap:.1e} over 200 pairs"));
    match empty_memory_gap(20, 9) {
        Ok(gap) => report.push(
            "memory:empty_equivalence",
            gap < EQUIVALENCE_TOLERANCE,
            format!("max gap {gap:.1e} over 20 inputs"),
        ),
        Err(e) => report.push("memory:empty_equivalence", false, e.to_string()),
    }
    report.seconds = start.elapsed().as_secs_f64();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use memgat::tensor::{CustomBackward, ParamStore, Tensor};

    fn broken_square() -> PrimitiveCase {
        let mut store = ParamStore::new();
        let id = store.insert("x", Tensor::new(vec![3], vec![0.3, -0.2, 0.5]).unwrap());
        PrimitiveCase::new(
            "broken_square",
            store,
            Box::new(move |s, g| {
                let x = g.param(s, id);
                let v = g.value(x).values().iter().map(|a| a * a).collect();
                let out = Tensor::new(vec![3], v)?;
                let rule: CustomBackward<f64> = Box::new(|inputs, _, up| {
                    vec![Some(inputs[0].values().iter().zip(up).map(|(a, u)| a * u).collect())]
                });
                let y = g.custom("broken_square", &[x], out, rule);
                Ok(g.sum(y))
            }),
        )
    }

    #[test]
    fn clean_build_passes_every_check() {
        let r = run_selfcheck(Vec::new());
        assert!(r.passed(), "{:?}", r.failures());
        assert!(r.checks.len() > 30);
    }

    #[test]
    fn injected_broken_rule_fails_by_name() {
        let r = run_selfcheck(vec![broken_square()]);
        let failures = r.failures();
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].name, "gradient:broken_square");
    }

    #[test]
    fn poi_oracle_handles_empty_sets() {
        let names = SlotLexicon::car().names().to_vec();
        let none: Vec<String> = vec![];
        let poi = vec!["poi".to_string()];
        assert_eq!(poi_oracle(&none, &none, &names), 0.0);
        assert_eq!(poi_oracle(&poi, &none, &names), 0.0);
        assert_eq!(poi_oracle(&none, &poi, &names), 1.0);
        assert_eq!(poi_oracle(&poi, &poi, &names), 0.0);
    }
}
