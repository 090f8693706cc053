//! Greedy and beam decoding over a stepwise model.
//!
//! Both searches are generic over the model: `step(state, prev_token)`
//! advances a cloneable decoder state by one token and returns raw logits
//! aligned with the candidate id list (a shortlist, or the full vocabulary
//! minus padding). Greedy decoding picks the highest raw activation and
//! never evaluates softmax — the argmax of a softmax equals the argmax of
//! its input. Beam search scores hypotheses by cumulative log-softmax.

use crate::error::{Error, Result};

/// Index of the maximum value; ties resolve to the lowest index.
pub fn argmax_lowest(scores: &[f32]) -> usize {
    let mut best = 0usize;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Log-softmax with max subtraction.
pub fn log_softmax(xs: &[f32]) -> Vec<f32> {
    let max = xs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let log_sum = xs.iter().map(|&x| (x - max).exp()).sum::<f32>().ln();
    xs.iter().map(|&x| x - max - log_sum).collect()
}

/// A (possibly finished) decoding hypothesis. Tokens never include the
/// terminating end-of-sentence id.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub score: f32,
    pub finished: bool,
}

fn check_logits(len: usize, want: usize) -> Result<()> {
    if len != want {
        return Err(Error::Dimension(format!(
            "step returned {len} logits for {want} candidates"
        )));
    }
    Ok(())
}

/// Greedy decoding: at each step emit the candidate with the highest raw
/// logit (softmax skipped), stopping at `eos` or after `max_len` tokens.
pub fn greedy_decode<S, F>(
    mut state: S,
    mut step: F,
    candidates: &[u32],
    eos: u32,
    max_len: usize,
) -> Result<Vec<u32>>
where
    F: FnMut(&mut S, u32) -> Result<Vec<f32>>,
{
    if max_len < 1 {
        return Err(Error::Parameter("max_len must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::Parameter("candidate set is empty".into()));
    }
    let mut tokens = Vec::new();
    let mut prev = eos;
    for _ in 0..max_len {
        let logits = step(&mut state, prev)?;
        check_logits(logits.len(), candidates.len())?;
        let tok = candidates[argmax_lowest(&logits)];
        if tok == eos {
            break;
        }
        tokens.push(tok);
        prev = tok;
    }
    Ok(tokens)
}

/// Beam search with beam width `b` over cumulative log-probabilities.
///
/// Hypotheses reaching `eos` are set aside as finished; the search ends when
/// no live hypothesis remains or `max_len` is hit, at which point live
/// hypotheses are returned as-is (unfinished). Returns up to `b` hypotheses
/// sorted by descending score. Scores are raw sums unless a length
/// normalization exponent is supplied, in which case the final ranking uses
/// `score / len^alpha`.
pub fn beam_search<S, F>(
    init: S,
    mut step: F,
    candidates: &[u32],
    eos: u32,
    b: usize,
    max_len: usize,
    length_norm: Option<f32>,
) -> Result<Vec<Hypothesis>>
where
    S: Clone,
    F: FnMut(&mut S, u32) -> Result<Vec<f32>>,
{
    if b < 1 {
        return Err(Error::Parameter("beam size must be at least 1".into()));
    }
    if max_len < 1 {
        return Err(Error::Parameter("max_len must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::Parameter("candidate set is empty".into()));
    }

    let mut live: Vec<(S, Hypothesis)> = vec![(
        init,
        Hypothesis { tokens: Vec::new(), score: 0.0, finished: false },
    )];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        // Advance every live hypothesis once; its expansions share the
        // stepped state.
        let mut stepped: Vec<(S, Vec<f32>)> = Vec::with_capacity(live.len());
        for (state, hyp) in &live {
            let prev = hyp.tokens.last().copied().unwrap_or(eos);
            let mut s = state.clone();
            let logits = step(&mut s, prev)?;
            check_logits(logits.len(), candidates.len())?;
            stepped.push((s, log_softmax(&logits)));
        }
        let mut expansions: Vec<(f32, usize, usize)> = Vec::new();
        for (parent, (_, logprobs)) in stepped.iter().enumerate() {
            let base = live[parent].1.score;
            for (ci, lp) in logprobs.iter().enumerate() {
                expansions.push((base + lp, parent, ci));
            }
        }
        expansions.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(candidates[a.2].cmp(&candidates[b.2]))
        });

        let mut next_live: Vec<(S, Hypothesis)> = Vec::new();
        for &(score, parent, ci) in expansions.iter().take(b) {
            let tok = candidates[ci];
            let mut tokens = live[parent].1.tokens.clone();
            if tok == eos {
                finished.push(Hypothesis { tokens, score, finished: true });
            } else {
                tokens.push(tok);
                next_live.push((stepped[parent].0.clone(), Hypothesis { tokens, score, finished: false }));
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
    }

    finished.extend(live.into_iter().map(|(_, h)| h));
    let rank = |h: &Hypothesis| match length_norm {
        Some(alpha) => h.score / (h.tokens.len().max(1) as f32).powf(alpha),
        None => h.score,
    };
    finished.sort_by(|a, b| rank(b).partial_cmp(&rank(a)).unwrap_or(std::cmp::Ordering::Equal));
    finished.truncate(b);
    Ok(finished)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_lowest(&[0.1, 3.0, -1.0]), 1);
        assert_eq!(argmax_lowest(&[2.0, 2.0, 1.0]), 0);
    }

    #[test]
    fn log_softmax_is_shifted_logits() {
        let lp = log_softmax(&[1.0, 2.0, 3.0]);
        let sum: f32 = lp.iter().map(|v| v.exp()).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert_eq!(argmax_lowest(&lp), 2);
    }

    /// Fixed tiny "model": logits depend on the previous token only.
    fn table_step(table: &'static [[f32; 4]]) -> impl FnMut(&mut usize, u32) -> Result<Vec<f32>> {
        move |state: &mut usize, prev: u32| {
            let row = table[(prev as usize + *state) % table.len()];
            *state += 1;
            Ok(row.to_vec())
        }
    }

    const TABLE: [[f32; 4]; 3] = [
        [0.1, 0.9, 0.3, 0.2],
        [0.2, 0.1, 0.8, 0.4],
        [2.0, 0.0, 0.1, 0.1],
    ];

    #[test]
    fn greedy_picks_raw_argmax_and_stops_at_eos() {
        let candidates = [0u32, 1, 2, 3];
        let out = greedy_decode(0usize, table_step(&TABLE), &candidates, 0, 10).unwrap();
        // Step 1 (prev=0, state 0): argmax -> token 1; step 2 (prev=1,
        // state 1): row 2 -> token 0 = eos, stop.
        assert_eq!(out, vec![1]);
    }

    #[test]
    fn greedy_respects_max_len() {
        let step = |_: &mut (), _: u32| Ok(vec![0.0, 1.0]);
        let out = greedy_decode((), step, &[0, 5], 0, 3).unwrap();
        assert_eq!(out, vec![5, 5, 5]);
    }

    #[test]
    fn beam_one_equals_greedy() {
        let candidates = [0u32, 1, 2, 3];
        let greedy = greedy_decode(0usize, table_step(&TABLE), &candidates, 0, 10).unwrap();
        let beams = beam_search(0usize, table_step(&TABLE), &candidates, 0, 1, 10, None).unwrap();
        assert_eq!(beams.len(), 1);
        assert_eq!(beams[0].tokens, greedy);
    }

    #[test]
    fn beam_scores_are_non_increasing() {
        let candidates = [0u32, 1, 2, 3];
        let beams = beam_search(0usize, table_step(&TABLE), &candidates, 0, 4, 4, None).unwrap();
        assert!(beams.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(beams.len() <= 4);
    }

    #[test]
    fn saturated_beam_finds_exhaustive_optimum() {
        // Enumerate every sequence of length <= 2 over 3 candidates plus
        // eos and compare the best total log-probability with a saturated
        // beam.
        let candidates = [0u32, 1, 2, 3];
        let eos = 0u32;
        let max_len = 2;

        let mut best: Option<(f32, Vec<u32>)> = None;
        let seqs: Vec<Vec<u32>> = {
            let mut all = Vec::new();
            for a in &candidates {
                all.push(vec![*a]);
                if *a != eos {
                    for b in &candidates {
                        all.push(vec![*a, *b]);
                    }
                }
            }
            all
        };
        for seq in seqs {
            // A sequence is admissible if eos appears only at the end; it
            // is "finished" if it ends with eos, otherwise it must have
            // max_len tokens.
            let body: Vec<u32> = match seq.split_last() {
                Some((&last, rest)) if last == eos => rest.to_vec(),
                _ => seq.clone(),
            };
            let ends_with_eos = seq.last() == Some(&eos);
            if !ends_with_eos && seq.len() < max_len {
                continue;
            }
            if body.iter().any(|&t| t == eos) {
                continue;
            }
            let mut state = 0usize;
            let mut stepf = table_step(&TABLE);
            let mut prev = eos;
            let mut score = 0.0f32;
            for &tok in &seq {
                let logits = stepf(&mut state, prev).unwrap();
                let lp = log_softmax(&logits);
                let ci = candidates.iter().position(|&c| c == tok).unwrap();
                score += lp[ci];
                prev = tok;
            }
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, body));
            }
        }
        let (best_score, best_tokens) = best.unwrap();

        let beams = beam_search(0usize, table_step(&TABLE), &candidates, eos, 64, max_len, None).unwrap();
        assert_eq!(beams[0].tokens, best_tokens);
        assert!((beams[0].score - best_score).abs() < 1e-6);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        let step = |_: &mut (), _: u32| Ok(vec![0.0, 1.0]);
        assert!(greedy_decode((), step, &[0, 1], 0, 0).is_err());
        let step = |_: &mut (), _: u32| Ok(vec![0.0, 1.0]);
        assert!(beam_search((), step, &[0, 1], 0, 0, 5, None).is_err());
        let step = |_: &mut (), _: u32| Ok(vec![0.0]);
        assert!(greedy_decode((), step, &[0, 1], 0, 5).is_err());
    }
}
