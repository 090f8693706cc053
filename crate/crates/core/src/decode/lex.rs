//! Lexical translation table and per-batch output shortlists.
//!
//! The table file holds `source<TAB>target<TAB>probability` triples (one per
//! line, the output format of word aligners); the frequency file holds
//! `token<TAB>count` lines ranking target tokens globally. For every batch
//! the output vocabulary is restricted to the union of the 100 most
//! frequent target words and the 100 most probable translations of each
//! distinct source word, plus the reserved end-of-sentence and unknown
//! tokens.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::decode::batch::Batch;
use crate::decode::vocab::{Vocab, EOS_ID, PAD_ID, UNK_ID};
use crate::error::{Error, Result};

/// Frequency-ranked targets taken per batch.
pub const TOP_FREQUENT: usize = 100;
/// Translations taken per distinct source token.
pub const TOP_TRANSLATIONS: usize = 100;

/// Per-source translation candidates plus a global target-frequency ranking,
/// resolved to vocabulary ids.
#[derive(Clone, Debug)]
pub struct LexTable {
    translations: HashMap<u32, Vec<(u32, f64)>>,
    freq_rank: Vec<u32>,
}

impl LexTable {
    /// Parse table and frequency text against a vocabulary. Tokens outside
    /// the vocabulary contribute nothing.
    pub fn parse(lex_text: &str, freq_text: &str, vocab: &Vocab) -> Result<Self> {
        let mut translations: HashMap<u32, Vec<(u32, f64)>> = HashMap::new();
        for (lineno, raw) in lex_text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (src, tgt, prob) = match (fields.next(), fields.next(), fields.next()) {
                (Some(s), Some(t), Some(p)) => (s, t, p),
                _ => {
                    return Err(Error::InputFormat(format!(
                        "lexical table line {}: expected source<TAB>target<TAB>probability",
                        lineno + 1
                    )))
                }
            };
            let prob: f64 = prob.trim().parse().map_err(|_| {
                Error::InputFormat(format!("lexical table line {}: bad probability {prob:?}", lineno + 1))
            })?;
            if !(0.0..=1.0).contains(&prob) {
                return Err(Error::InputFormat(format!(
                    "lexical table line {}: probability {prob} outside [0, 1]",
                    lineno + 1
                )));
            }
            let (Some(src_id), Some(tgt_id)) = (vocab.id(src), vocab.id(tgt)) else {
                continue;
            };
            if tgt_id == PAD_ID {
                continue;
            }
            translations.entry(src_id).or_default().push((tgt_id, prob));
        }
        for list in translations.values_mut() {
            list.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        }

        let mut counts: Vec<(u32, u64)> = Vec::new();
        for (lineno, raw) in freq_text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let (tok, count) = line.split_once('\t').ok_or_else(|| {
                Error::InputFormat(format!("frequency file line {}: expected token<TAB>count", lineno + 1))
            })?;
            let count: u64 = count.trim().parse().map_err(|_| {
                Error::InputFormat(format!("frequency file line {}: bad count {count:?}", lineno + 1))
            })?;
            if let Some(id) = vocab.id(tok) {
                if id != PAD_ID {
                    counts.push((id, count));
                }
            }
        }
        counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let freq_rank = counts.into_iter().map(|(id, _)| id).collect();

        Ok(LexTable { translations, freq_rank })
    }

    pub fn load(lex_path: &Path, freq_path: &Path, vocab: &Vocab) -> Result<Self> {
        let lex_text = fs::read_to_string(lex_path)?;
        let freq_text = fs::read_to_string(freq_path)?;
        Self::parse(&lex_text, &freq_text, vocab)
    }

    /// Translation candidates of a source id, sorted by descending
    /// probability. Unseen sources yield an empty slice.
    pub fn translations(&self, src_id: u32) -> &[(u32, f64)] {
        self.translations.get(&src_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The `n` globally most frequent target ids.
    pub fn top_frequent(&self, n: usize) -> &[u32] {
        &self.freq_rank[..n.min(self.freq_rank.len())]
    }
}

/// Restricted output vocabulary for one batch: deduplicated, ascending ids,
/// always containing EOS and UNK.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shortlist {
    ids: Vec<u32>,
}

impl Shortlist {
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    /// The whole vocabulary except padding (the unrestricted candidate set).
    pub fn full(vocab_len: usize) -> Shortlist {
        Shortlist {
            ids: (0..vocab_len as u32).filter(|&id| id != PAD_ID).collect(),
        }
    }
}

/// Union of the globally frequent targets and each distinct source token's
/// top translations, plus the reserved decoding tokens.
pub fn build_shortlist(batch: &Batch, lex: &LexTable) -> Shortlist {
    let mut set: BTreeSet<u32> = BTreeSet::new();
    set.insert(EOS_ID);
    set.insert(UNK_ID);
    set.extend(lex.top_frequent(TOP_FREQUENT).iter().copied());
    let mut seen_sources = BTreeSet::new();
    for item in &batch.items {
        for &src in &item.tokens {
            if seen_sources.insert(src) {
                for &(tgt, _) in lex.translations(src).iter().take(TOP_TRANSLATIONS) {
                    set.insert(tgt);
                }
            }
        }
    }
    set.remove(&PAD_ID);
    Shortlist { ids: set.into_iter().collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::batch::make_batches;

    fn vocab() -> Vocab {
        Vocab::synthetic(12).unwrap()
    }

    fn batch_of(sentences: &[&[u32]]) -> Batch {
        let sents: Vec<Vec<u32>> = sentences.iter().map(|s| s.to_vec()).collect();
        make_batches(&sents, 100).unwrap().remove(0)
    }

    #[test]
    fn per_source_lists_sorted_by_probability() {
        let v = vocab();
        let lex = LexTable::parse("w3\tw4\t0.2\nw3\tw5\t0.7\nw3\tw6\t0.1\n", "", &v).unwrap();
        let t = lex.translations(3);
        assert_eq!(t.iter().map(|p| p.0).collect::<Vec<_>>(), vec![5, 4, 6]);
        assert!(t.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn parse_rejects_malformed_lines() {
        let v = vocab();
        assert!(LexTable::parse("w3 w4 0.5\n", "", &v).is_err());
        assert!(LexTable::parse("w3\tw4\tnope\n", "", &v).is_err());
        assert!(LexTable::parse("w3\tw4\t1.5\n", "", &v).is_err());
        assert!(LexTable::parse("", "w3 7\n", &v).is_err());
    }

    #[test]
    fn unseen_tokens_contribute_nothing() {
        let v = vocab();
        let lex = LexTable::parse("w3\tw4\t0.5\nghost\tw5\t0.9\nw3\tghost\t0.9\n", "", &v).unwrap();
        assert_eq!(lex.translations(3).len(), 1);
        let batch = batch_of(&[&[3, 9]]);
        let sl = build_shortlist(&batch, &lex);
        // EOS, UNK and the one known translation; the unseen source w9
        // contributes nothing.
        assert_eq!(sl.ids(), &[EOS_ID, UNK_ID, 4]);
    }

    #[test]
    fn small_vocabulary_is_fully_covered() {
        // With every target in the frequency list, the top-100 alone spans
        // the whole (non-pad) vocabulary.
        let v = vocab();
        let freq: String = (0..12).map(|i| format!("{}\t{}\n", v.token(i).unwrap(), 100 - i)).collect();
        let lex = LexTable::parse("", &freq, &v).unwrap();
        let batch = batch_of(&[&[3]]);
        let sl = build_shortlist(&batch, &lex);
        assert_eq!(sl.ids(), Shortlist::full(12).ids());
    }

    #[test]
    fn union_is_deduplicated() {
        let v = vocab();
        let lex = LexTable::parse("w3\tw6\t0.9\nw4\tw6\t0.8\nw4\tw7\t0.4\n", "w6\t10\n", &v).unwrap();
        let batch = batch_of(&[&[3, 4]]);
        let sl = build_shortlist(&batch, &lex);
        assert_eq!(sl.ids(), &[EOS_ID, UNK_ID, 6, 7]);
    }

    #[test]
    fn matches_brute_force_union() {
        // Three source tokens, a few translations each, frequency list of
        // four: compare against an independently computed set union.
        let v = Vocab::synthetic(30).unwrap();
        let mut lex_text = String::new();
        let sources = [3u32, 4, 5];
        let translations: [&[(u32, f64)]; 3] = [
            &[(10, 0.9), (11, 0.5), (12, 0.3), (13, 0.1), (14, 0.05)],
            &[(12, 0.8), (15, 0.6), (16, 0.2), (17, 0.15), (18, 0.01)],
            &[(19, 0.7), (10, 0.4), (20, 0.3), (21, 0.2), (22, 0.1)],
        ];
        for (s, list) in sources.iter().zip(&translations) {
            for (t, p) in list.iter() {
                lex_text.push_str(&format!(
                    "{}\t{}\t{}\n",
                    v.token(*s).unwrap(),
                    v.token(*t).unwrap(),
                    p
                ));
            }
        }
        let freq_ids = [23u32, 24, 25, 10];
        let freq_text: String = freq_ids
            .iter()
            .enumerate()
            .map(|(i, id)| format!("{}\t{}\n", v.token(*id).unwrap(), 50 - i))
            .collect();
        let lex = LexTable::parse(&lex_text, &freq_text, &v).unwrap();
        let batch = batch_of(&[&[3, 4], &[5, 3]]);
        let got = build_shortlist(&batch, &lex);

        let mut expect: BTreeSet<u32> = [EOS_ID, UNK_ID].into();
        expect.extend(freq_ids);
        for list in &translations {
            expect.extend(list.iter().map(|p| p.0));
        }
        assert_eq!(got.ids(), expect.into_iter().collect::<Vec<_>>());
        assert!(got.contains(EOS_ID) && got.contains(UNK_ID));
    }
}
