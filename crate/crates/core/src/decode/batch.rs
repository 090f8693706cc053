//! Word-budget batching of length-sorted input.

use crate::error::{Error, Result};

/// One sentence carrying its position in the original input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchItem {
    pub index: usize,
    pub tokens: Vec<u32>,
}

/// Sentences of approximately equal length decoded together. Within a batch
/// items keep their original input order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub items: Vec<BatchItem>,
    pub words: usize,
}

impl Batch {
    /// Flatten to a row-major `[sentences, width]` id matrix, short rows
    /// padded with `pad`. The pad id never reaches the output projection.
    pub fn padded_matrix(&self, pad: u32) -> (Vec<u32>, usize) {
        let width = self.items.iter().map(|i| i.tokens.len()).max().unwrap_or(0);
        let mut out = Vec::with_capacity(self.items.len() * width);
        for item in &self.items {
            out.extend_from_slice(&item.tokens);
            out.extend(std::iter::repeat(pad).take(width - item.tokens.len()));
        }
        (out, width)
    }
}

/// Sort sentences ascending by length (stable), then greedily fill batches:
/// a batch closes when the next sentence would push it past the budget. A
/// single sentence longer than the budget forms its own batch. Every input
/// sentence appears exactly once; original order is recoverable through the
/// carried indices.
pub fn make_batches(sentences: &[Vec<u32>], word_budget: usize) -> Result<Vec<Batch>> {
    if word_budget < 1 {
        return Err(Error::Parameter("word budget must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.sort_by_key(|&i| sentences[i].len());

    let mut batches = Vec::new();
    let mut current: Vec<BatchItem> = Vec::new();
    let mut words = 0usize;
    for &i in &order {
        let len = sentences[i].len();
        if !current.is_empty() && words + len > word_budget {
            current.sort_by_key(|item| item.index);
            batches.push(Batch { items: std::mem::take(&mut current), words });
            words = 0;
        }
        current.push(BatchItem { index: i, tokens: sentences[i].clone() });
        words += len;
    }
    if !current.is_empty() {
        current.sort_by_key(|item| item.index);
        batches.push(Batch { items: current, words });
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentences(lengths: &[usize]) -> Vec<Vec<u32>> {
        lengths.iter().map(|&n| vec![7u32; n]).collect()
    }

    #[test]
    fn greedy_fill_example() {
        // Lengths [5, 3, 2] under budget 6 pack as {2, 3} then {5}.
        let batches = make_batches(&sentences(&[5, 3, 2]), 6).unwrap();
        assert_eq!(batches.len(), 2);
        let mut lens: Vec<usize> = batches[0].items.iter().map(|i| i.tokens.len()).collect();
        lens.sort();
        assert_eq!(lens, vec![2, 3]);
        assert_eq!(batches[0].words, 5);
        assert_eq!(batches[1].items[0].tokens.len(), 5);
    }

    #[test]
    fn over_budget_singleton() {
        let batches = make_batches(&sentences(&[10]), 6).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].words, 10);
    }

    #[test]
    fn empty_input_gives_no_batches() {
        assert!(make_batches(&[], 6).unwrap().is_empty());
        assert!(make_batches(&sentences(&[1]), 0).is_err());
    }

    #[test]
    fn items_keep_original_order_within_batch() {
        let batches = make_batches(&sentences(&[5, 3, 2]), 6).unwrap();
        let idx: Vec<usize> = batches[0].items.iter().map(|i| i.index).collect();
        assert_eq!(idx, vec![1, 2]);
    }

    #[test]
    fn partition_is_exact() {
        let input = sentences(&[4, 1, 9, 2, 2, 7, 3, 5, 1, 6]);
        let batches = make_batches(&input, 8).unwrap();
        let mut seen: Vec<usize> = batches
            .iter()
            .flat_map(|b| b.items.iter().map(|i| i.index))
            .collect();
        seen.sort();
        assert_eq!(seen, (0..input.len()).collect::<Vec<_>>());
        for b in &batches {
            let words: usize = b.items.iter().map(|i| i.tokens.len()).sum();
            assert_eq!(words, b.words);
            assert!(b.words <= 8 || b.items.len() == 1);
        }
    }

    #[test]
    fn padded_matrix_is_rectangular() {
        let batches = make_batches(&sentences(&[2, 3]), 10).unwrap();
        let (flat, width) = batches[0].padded_matrix(999);
        assert_eq!(width, 3);
        assert_eq!(flat, vec![7, 7, 999, 7, 7, 7]);
    }
}
