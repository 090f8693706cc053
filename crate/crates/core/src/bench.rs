//! Benchmark bookkeeping: the tokens-per-dollar metric, the CSV report with
//! its Pareto-frontier column, and the n-best selection driver.

use crate::decode::select_distill;
use crate::error::{Error, Result};

/// One timed translation run.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRun {
    pub system: String,
    pub size_mib: f64,
    /// Translation seconds, model load and vocabulary parsing excluded.
    pub seconds: f64,
    /// Whitespace-separated source tokens in the input.
    pub tokens: u64,
    pub beam: usize,
    pub regime: String,
    /// Caller-supplied quality score (externally measured); not computed here.
    pub quality: Option<f64>,
}

/// Source tokens translated per US dollar of instance time:
/// `tokens / seconds * 3600 / usd_per_hour`.
pub fn cost_effectiveness(tokens: u64, seconds: f64, usd_per_hour: f64) -> Result<f64> {
    if !(seconds > 0.0) {
        return Err(Error::Parameter(format!("translation time must be positive, got {seconds}")));
    }
    if !(usd_per_hour > 0.0) {
        return Err(Error::Parameter(format!("instance price must be positive, got {usd_per_hour}")));
    }
    Ok(tokens as f64 / seconds * 3600.0 / usd_per_hour)
}

/// Frontier mask over (cost-effectiveness, quality) points: a point is on
/// the frontier iff no other point is strictly better on both axes.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].0.partial_cmp(&points[a].0).unwrap_or(std::cmp::Ordering::Equal));
    let mut frontier = vec![true; points.len()];
    let mut best_quality = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        // Points of equal cost cannot dominate each other on that axis, so
        // the whole tie group compares against strictly faster points only.
        let mut j = i;
        while j < order.len() && points[order[j]].0 == points[order[i]].0 {
            frontier[order[j]] = points[order[j]].1 >= best_quality;
            j += 1;
        }
        for &idx in &order[i..j] {
            best_quality = best_quality.max(points[idx].1);
        }
        i = j;
    }
    frontier
}

const REPORT_HEADER: &str = "system,size_mib,time_s,tokens,beam,regime,tokens_per_usd_millions,quality,frontier";

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c == ',' || c == '\n' || c == '\r' { '_' } else { c })
        .collect()
}

/// Render runs as CSV, sorted by descending cost-effectiveness, with a
/// frontier marker per row. Runs without a quality score participate in
/// dominance with quality 0.
pub fn emit_report(runs: &[BenchRun], usd_per_hour: f64) -> Result<String> {
    if runs.is_empty() {
        return Err(Error::Parameter("report needs at least one run".into()));
    }
    let costs: Vec<f64> = runs
        .iter()
        .map(|r| cost_effectiveness(r.tokens, r.seconds, usd_per_hour).map(|c| c / 1e6))
        .collect::<Result<_>>()?;
    let points: Vec<(f64, f64)> = costs
        .iter()
        .zip(runs)
        .map(|(&c, r)| (c, r.quality.unwrap_or(0.0)))
        .collect();
    let frontier = pareto_frontier(&points);

    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| costs[b].partial_cmp(&costs[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for &i in &order {
        let r = &runs[i];
        let quality = r.quality.map(|q| q.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{:.0},{:.1},{},{},{},{:.2},{},{}\n",
            sanitize(&r.system),
            r.size_mib,
            r.seconds,
            r.tokens,
            r.beam,
            sanitize(&r.regime),
            costs[i],
            quality,
            frontier[i]
        ));
    }
    Ok(out)
}

/// Read back a report produced by [`emit_report`] (the frontier column is
/// recomputed on the next emit, so it is ignored here).
pub fn parse_report(csv: &str) -> Result<Vec<BenchRun>> {
    let mut lines = csv.lines();
    match lines.next() {
        Some(h) if h == REPORT_HEADER => {}
        _ => return Err(Error::InputFormat("not a benchmark report (bad header)".into())),
    }
    let mut runs = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::InputFormat(format!(
                "report line {}: expected 9 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let bad = |what: &str| Error::InputFormat(format!("report line {}: bad {what}", lineno + 2));
        runs.push(BenchRun {
            system: fields[0].to_string(),
            size_mib: fields[1].parse().map_err(|_| bad("size"))?,
            seconds: fields[2].parse().map_err(|_| bad("time"))?,
            tokens: fields[3].parse().map_err(|_| bad("tokens"))?,
            beam: fields[4].parse().map_err(|_| bad("beam"))?,
            regime: fields[5].to_string(),
            quality: if fields[7].is_empty() {
                None
            } else {
                Some(fields[7].parse().map_err(|_| bad("quality"))?)
            },
        });
    }
    Ok(runs)
}

/// Full-precision TSV run ledger, one row per run. The CSV report rounds
/// its columns for presentation; accumulating runs across CLI invocations
/// goes through this ledger so timings survive re-emission unrounded.
pub fn runs_to_tsv(runs: &[BenchRun]) -> String {
    let mut out = String::new();
    for r in runs {
        let quality = r.quality.map(|q| q.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            sanitize(&r.system),
            r.size_mib,
            r.seconds,
            r.tokens,
            r.beam,
            sanitize(&r.regime),
            quality
        ));
    }
    out
}

pub fn runs_from_tsv(text: &str) -> Result<Vec<BenchRun>> {
    let mut runs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(Error::InputFormat(format!(
                "run ledger line {}: expected 7 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let bad = |what: &str| Error::InputFormat(format!("run ledger line {}: bad {what}", lineno + 1));
        runs.push(BenchRun {
            system: fields[0].to_string(),
            size_mib: fields[1].parse().map_err(|_| bad("size"))?,
            seconds: fields[2].parse().map_err(|_| bad("time"))?,
            tokens: fields[3].parse().map_err(|_| bad("tokens"))?,
            beam: fields[4].parse().map_err(|_| bad("beam"))?,
            regime: fields[5].to_string(),
            quality: if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse().map_err(|_| bad("quality"))?)
            },
        });
    }
    Ok(runs)
}

/// Per-sentence n-best selection: pick the hypothesis with the highest
/// sentence BLEU against the corresponding reference line.
///
/// The n-best text holds `sentence_index ||| hypothesis` lines (0-based
/// indices); the reference text holds one line per sentence. Missing
/// indices or an index outside the reference count are input-format errors.
pub fn run_distill(nbest_text: &str, reference_text: &str) -> Result<Vec<String>> {
    let references: Vec<Vec<&str>> = reference_text
        .lines()
        .map(|l| l.split_whitespace().collect())
        .collect();
    if references.is_empty() {
        return Err(Error::InputFormat("reference file is empty".into()));
    }
    let mut groups: Vec<Vec<String>> = vec![Vec::new(); references.len()];
    for (lineno, line) in nbest_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (idx, hyp) = line.split_once("|||").ok_or_else(|| {
            Error::InputFormat(format!(
                "n-best line {}: expected `sentence_index ||| hypothesis`",
                lineno + 1
            ))
        })?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::InputFormat(format!("n-best line {}: bad sentence index", lineno + 1)))?;
        if idx >= references.len() {
            return Err(Error::InputFormat(format!(
                "n-best line {}: sentence index {idx} outside {} references",
                lineno + 1,
                references.len()
            )));
        }
        groups[idx].push(hyp.trim().to_string());
    }
    let mut selected = Vec::with_capacity(references.len());
    for (i, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::InputFormat(format!("no hypotheses for sentence {i}")));
        }
        if references[i].is_empty() {
            return Err(Error::InputFormat(format!("reference line {} is empty", i + 1)));
        }
        let tokenized: Vec<Vec<&str>> = group.iter().map(|h| h.split_whitespace().collect()).collect();
        let (winner, _) = select_distill(&tokenized, &references[i])?;
        selected.push(group[winner].clone());
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_cost_effectiveness_arithmetic() {
        // CPU row: 62,954 tokens in 273.2 s at 0.102 USD/h.
        let cpu = cost_effectiveness(62_954, 273.2, 0.102).unwrap() / 1e6;
        assert!((8.12..=8.14).contains(&cpu), "{cpu}");
        // GPU row: 8.9 s at 3.259 USD/h.
        let gpu = cost_effectiveness(62_954, 8.9, 3.259).unwrap() / 1e6;
        assert!((7.80..=7.83).contains(&gpu), "{gpu}");
    }

    #[test]
    fn doubling_time_halves_throughput() {
        let one = cost_effectiveness(1000, 10.0, 0.5).unwrap();
        let two = cost_effectiveness(1000, 20.0, 0.5).unwrap();
        assert!((one / two - 2.0).abs() < 1e-12);
        assert!(cost_effectiveness(1000, 0.0, 0.5).is_err());
        assert!(cost_effectiveness(1000, 1.0, 0.0).is_err());
        assert_eq!(cost_effectiveness(0, 1.0, 1.0).unwrap(), 0.0);
    }

    fn run(system: &str, seconds: f64, quality: Option<f64>) -> BenchRun {
        BenchRun {
            system: system.into(),
            size_mib: 100.0,
            seconds,
            tokens: 10_000,
            beam: 1,
            regime: "float32".into(),
            quality,
        }
    }

    #[test]
    fn single_run_is_on_the_frontier() {
        let csv = emit_report(&[run("only", 10.0, Some(25.0))], 0.1).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines.len(), 2);
        assert!(lines[1].ends_with(",true"));
        assert!(emit_report(&[], 0.1).is_err());
    }

    #[test]
    fn dominated_run_is_marked_false() {
        // "fast" is better on both axes than "slow".
        let runs = vec![run("fast", 10.0, Some(27.0)), run("slow", 20.0, Some(26.0))];
        let csv = emit_report(&runs, 0.1).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("fast,") && lines[1].ends_with(",true"));
        assert!(lines[2].starts_with("slow,") && lines[2].ends_with(",false"));
    }

    #[test]
    fn frontier_matches_quadratic_oracle() {
        // Deterministic pseudo-random points, including ties.
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) % 1000) as f64
        };
        for trial in 0..50 {
            let n = 1 + (trial % 20);
            let points: Vec<(f64, f64)> = (0..n).map(|_| (next() % 17.0, next() % 13.0)).collect();
            let got = pareto_frontier(&points);
            for (i, &(ci, qi)) in points.iter().enumerate() {
                let dominated = points
                    .iter()
                    .enumerate()
                    .any(|(j, &(cj, qj))| j != i && cj > ci && qj > qi);
                assert_eq!(got[i], !dominated, "trial {trial} point {i}");
            }
        }
    }

    #[test]
    fn report_roundtrips_and_sorts_by_cost() {
        let runs = vec![
            run("slow", 40.0, Some(28.0)),
            run("fast", 10.0, None),
            run("mid", 20.0, Some(26.5)),
        ];
        let csv = emit_report(&runs, 0.102).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("fast,"));
        assert!(lines[2].starts_with("mid,"));
        assert!(lines[3].starts_with("slow,"));
        let parsed = parse_report(&csv).unwrap();
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed[0].system, "fast");
        assert_eq!(parsed[0].quality, None);
        assert_eq!(parsed[1].quality, Some(26.5));
        assert!(parse_report("garbage").is_err());
    }

    #[test]
    fn run_ledger_roundtrips_exact_seconds() {
        let runs = vec![run("a", 0.0091234, Some(26.5)), run("b", 123.456789, None)];
        let parsed = runs_from_tsv(&runs_to_tsv(&runs)).unwrap();
        assert_eq!(parsed, runs);
        assert!(runs_from_tsv("one\ttwo\n").is_err());
    }

    #[test]
    fn distill_selects_per_sentence_winners() {
        let refs = "the cat sat\ngreen ideas sleep\n";
        let nbest = "0 ||| the cat sat down\n0 ||| the cat sat\n1 ||| ideas sleep\n1 ||| green ideas sleep furiously\n";
        let out = run_distill(nbest, refs).unwrap();
        assert_eq!(out, vec!["the cat sat", "green ideas sleep furiously"]);
    }

    #[test]
    fn distill_rejects_gaps_and_bad_indices() {
        let refs = "a b\nc d\n";
        assert!(run_distill("0 ||| a b\n", refs).is_err());
        assert!(run_distill("0 ||| a b\n2 ||| c d\n", refs).is_err());
        assert!(run_distill("x ||| a b\n", refs).is_err());
        assert!(run_distill("0 - a b\n", refs).is_err());
        assert!(run_distill("0 ||| a\n", "").is_err());
    }
}
