//! Sentence-level BLEU and n-best hypothesis selection.
//!
//! Precision orders 1..4 with add-one smoothing on numerator and
//! denominator for orders >= 2 (unsmoothed sentence BLEU is degenerate:
//! any missing 4-gram zeroes the score). Brevity penalty is
//! `exp(1 - r/c)` when the candidate is shorter than the reference.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

const MAX_ORDER: usize = 4;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut counts: HashMap<&[T], u64> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU of a hypothesis against one reference, in `[0, 1]`.
/// An empty hypothesis scores 0; an empty reference is a parameter error.
pub fn sentence_bleu<T: Eq + Hash>(hypothesis: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Parameter("reference must be non-empty".into()));
    }
    if hypothesis.is_empty() {
        return Ok(0.0);
    }
    let mut log_precision_sum = 0.0f64;
    for n in 1..=MAX_ORDER {
        let hyp = ngram_counts(hypothesis, n);
        let reference_counts = ngram_counts(reference, n);
        let matched: u64 = hyp
            .iter()
            .map(|(gram, &c)| c.min(reference_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let total = hypothesis.len().saturating_sub(n - 1) as u64;
        let precision = if n == 1 {
            matched as f64 / total as f64
        } else {
            (matched + 1) as f64 / (total + 1) as f64
        };
        if precision == 0.0 {
            return Ok(0.0);
        }
        log_precision_sum += precision.ln();
    }
    let c = hypothesis.len() as f64;
    let r = reference.len() as f64;
    let brevity = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Ok(brevity * (log_precision_sum / MAX_ORDER as f64).exp())
}

/// Pick the n-best hypothesis with the highest sentence BLEU against the
/// reference; ties resolve to the lowest (highest-ranked) index.
pub fn select_distill<'a, T: Eq + Hash>(
    nbest: &'a [Vec<T>],
    reference: &[T],
) -> Result<(usize, &'a [T])> {
    if nbest.is_empty() {
        return Err(Error::Parameter("n-best list must be non-empty".into()));
    }
    let mut best = 0usize;
    let mut best_score = sentence_bleu(&nbest[0], reference)?;
    for (i, hyp) in nbest.iter().enumerate().skip(1) {
        let score = sentence_bleu(hyp, reference)?;
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    Ok((best, &nbest[best]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_scores_one() {
        let r = toks("the cat sat on the mat");
        assert!((sentence_bleu(&r, &r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_four_gram_overlap_is_still_positive() {
        let hyp = toks("a b c d e");
        let reference = toks("a x b y c z d e q");
        let score = sentence_bleu(&hyp, &reference).unwrap();
        assert!(score > 0.0);
        assert!(score < 1.0);
    }

    #[test]
    fn empty_cases() {
        let r = toks("a b");
        assert_eq!(sentence_bleu::<&str>(&[], &r).unwrap(), 0.0);
        assert!(sentence_bleu::<&str>(&r, &[]).is_err());
        // Zero unigram overlap is unsmoothed and scores 0.
        assert_eq!(sentence_bleu(&toks("x y z"), &r).unwrap(), 0.0);
    }

    /// Independent scorer written the long way: explicit n-gram vectors and
    /// linear scans instead of hash maps.
    fn reference_bleu(hyp: &[&str], reference: &[&str]) -> f64 {
        if hyp.is_empty() {
            return 0.0;
        }
        let grams = |xs: &[&str], n: usize| -> Vec<String> {
            if xs.len() < n {
                return Vec::new();
            }
            (0..=xs.len() - n).map(|i| xs[i..i + n].join(" ")).collect()
        };
        let mut logsum = 0.0f64;
        for n in 1..=4 {
            let h = grams(hyp, n);
            let mut r = grams(reference, n);
            let mut matched = 0u64;
            for g in &h {
                if let Some(pos) = r.iter().position(|x| x == g) {
                    r.remove(pos);
                    matched += 1;
                }
            }
            let total = h.len() as u64;
            let p = if n == 1 {
                matched as f64 / total as f64
            } else {
                (matched + 1) as f64 / (total + 1) as f64
            };
            if p == 0.0 {
                return 0.0;
            }
            logsum += p.ln() / 4.0;
        }
        let bp = if hyp.len() < reference.len() {
            (1.0 - reference.len() as f64 / hyp.len() as f64).exp()
        } else {
            1.0
        };
        bp * logsum.exp()
    }

    #[test]
    fn matches_independent_scorer() {
        let cases = [
            ("the cat sat", "the cat sat down"),
            ("the the the the", "the cat"),
            ("a b c d e f", "a b c x e f"),
            ("one two three four five", "one two three four five"),
            ("b a", "a b c d"),
        ];
        for (h, r) in cases {
            let hyp = toks(h);
            let reference = toks(r);
            let got = sentence_bleu(&hyp, &reference).unwrap();
            let want = reference_bleu(&hyp, &reference);
            assert!((got - want).abs() < 1e-12, "{h:?} vs {r:?}: {got} vs {want}");
        }
    }

    #[test]
    fn brevity_penalty_direction() {
        let reference = toks("a b c d e f g h");
        let short = sentence_bleu(&toks("a b c d"), &reference).unwrap();
        let long = sentence_bleu(&toks("a b c d e f g h"), &reference).unwrap();
        assert!(long > short);
    }

    #[test]
    fn select_distill_prefers_reference_copy() {
        let reference = toks("the cat sat");
        let nbest = vec![toks("a cat sat"), toks("the cat sat"), toks("the cat")];
        let (idx, seq) = select_distill(&nbest, &reference).unwrap();
        assert_eq!(idx, 1);
        assert_eq!(seq, reference.as_slice());
    }

    #[test]
    fn select_distill_singleton_and_ties() {
        let reference = toks("x y");
        let only = vec![toks("z")];
        assert_eq!(select_distill(&only, &reference).unwrap().0, 0);
        // Identical hypotheses tie; the lowest index wins.
        let dup = vec![toks("x y"), toks("x y")];
        assert_eq!(select_distill(&dup, &reference).unwrap().0, 0);
        assert!(select_distill::<&str>(&[], &reference).is_err());
    }
}
