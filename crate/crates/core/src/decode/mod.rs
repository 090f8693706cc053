//! Decoding-side machinery: vocabulary, lexical shortlists, word-budget
//! batching, greedy/beam search and sentence-BLEU hypothesis selection.

pub mod batch;
pub mod bleu;
pub mod lex;
pub mod search;
pub mod vocab;

pub use batch::{make_batches, Batch, BatchItem};
pub use bleu::{select_distill, sentence_bleu};
pub use lex::{build_shortlist, LexTable, Shortlist, TOP_FREQUENT, TOP_TRANSLATIONS};
pub use search::{argmax_lowest, beam_search, greedy_decode, log_softmax, Hypothesis};
pub use vocab::{Vocab, EOS_ID, PAD_ID, UNK_ID};
