//! Direct counting over `(true, predicted)` pairs, independent of the
//! confusion matrix.

use lnkt_core::metrics::{classification_report, confusion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Brute {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub weighted_f1: f64,
}

pub fn brute_force(truth: &[usize], pred: &[usize], k: usize) -> Brute {
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut b = Brute {
        precision: vec![],
        recall: vec![],
        f1: vec![],
        support: vec![],
        accuracy: 0.0,
        macro_f1: 0.0,
        macro_precision: 0.0,
        macro_recall: 0.0,
        weighted_f1: 0.0,
    };
    for c in 0..k {
        let pairs = || truth.iter().zip(pred);
        let tp = pairs().filter(|&(&t, &p)| t == c && p == c).count();
        let predicted = pairs().filter(|&(_, &p)| p == c).count();
        let actual = pairs().filter(|&(&t, _)| t == c).count();
        let p = frac(tp, predicted);
        let r = frac(tp, actual);
        b.precision.push(p);
        b.recall.push(r);
        b.f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
        b.support.push(actual as u64);
    }
    b.accuracy = frac(truth.iter().zip(pred).filter(|(t, p)| t == p).count(), truth.len());
    b.macro_precision = b.precision.iter().sum::<f64>() / k as f64;
    b.macro_recall = b.recall.iter().sum::<f64>() / k as f64;
    b.macro_f1 = b.f1.iter().sum::<f64>() / k as f64;
    b.weighted_f1 = b.f1.iter().zip(&b.support).map(|(f, &s)| f * s as f64).sum::<f64>() / truth.len() as f64;
    b
}

pub fn random_case(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>, usize) {
    let k = rng.random_range(1..=5);
    let n = rng.random_range(1..=200);
    let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    // a per-case hit rate covers everything from chance level to perfect
    let hit_rate: f64 = rng.random();
    let pred = truth
        .iter()
        .map(|&t| if rng.random::<f64>() < hit_rate { t } else { rng.random_range(0..k) })
        .collect();
    (truth, pred, k)
}

/// Checks one case; returns a description of the first disagreement.
pub fn check_case(truth: &[usize], pred: &[usize], k: usize) -> Result<(), String> {
    let cm = confusion(truth, pred, k).map_err(|e| e.to_string())?;
    let r = classification_report(&cm).map_err(|e| e.to_string())?;
    let b = brute_force(truth, pred, k);
    for c in 0..k {
        let m = &r.classes[c];
        if (m.precision, m.recall, m.f1, m.support) != (b.precision[c], b.recall[c], b.f1[c], b.support[c]) {
            return Err(format!("class {c}: report {m:?} vs brute force"));
        }
    }
    let pairs = [
        ("accuracy", r.accuracy, b.accuracy),
        ("macro precision", r.macro_avg.precision, b.macro_precision),
        ("macro recall", r.macro_avg.recall, b.macro_recall),
        ("macro f1", r.macro_avg.f1, b.macro_f1),
        ("weighted f1", r.weighted_avg.f1, b.weighted_f1),
    ];
    for (what, got, want) in pairs {
        if got != want {
            return Err(format!("{what}: {got} vs {want}"));
        }
    }
    if r.total_support != truth.len() as u64 {
        return Err("total support".into());
    }
    let tp: u64 = (0..k).map(|c| cm.true_positives(c)).sum();
    let tp_fn: u64 = (0..k).map(|c| cm.true_positives(c) + cm.false_negatives(c)).sum();
    let micro_recall = tp as f64 / tp_fn as f64;
    if (micro_recall - r.accuracy).abs() > 1e-12 {
        return Err(format!("micro recall {micro_recall} vs accuracy {}", r.accuracy));
    }
    Ok(())
}

/// Runs `cases` random label lists; returns the number that agreed and the
/// first failure, if any.
pub fn run(cases: usize, seed: u64) -> (usize, Option<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agreed = 0;
    for i in 0..cases {
        let (truth, pred, k) = random_case(&mut rng);
        match check_case(&truth, &pred, k) {
            Ok(()) => agreed += 1,
            Err(e) => return (agreed, Some(format!("case {i}: {e}"))),
        }
    }
    (agreed, None)
}
