//! Token vocabulary with fixed reserved ids.
//!
//! File format: one token per line, id = line number. Lines 0, 1 and 2 are
//! reserved for the end-of-sentence, unknown and padding tokens.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const EOS_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_ID: u32 = 2;

/// Number of reserved ids at the front of every vocabulary.
pub const RESERVED: usize = 3;

#[derive(Clone, Debug)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED {
            return Err(Error::Vocabulary(format!(
                "vocabulary needs at least {RESERVED} entries for the reserved tokens, got {}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::Vocabulary(format!("duplicate token {tok:?} at line {i}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Synthetic vocabulary: reserved tokens followed by `w3..w{n-1}`.
    pub fn synthetic(n: usize) -> Result<Self> {
        if n < RESERVED {
            return Err(Error::Vocabulary("synthetic vocabulary needs at least 3 entries".into()));
        }
        let mut tokens = vec!["<eos>".to_string(), "<unk>".to_string(), "<pad>".to_string()];
        tokens.extend((RESERVED..n).map(|i| format!("w{i}")));
        Vocab::from_tokens(tokens)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Vocab::from_tokens(text.lines().map(|l| l.to_string()).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Vocabulary(format!("id {id} outside vocabulary of {}", self.tokens.len())))
    }

    /// Whitespace-tokenize a line into ids, unknown tokens mapping to UNK.
    pub fn encode_line(&self, line: &str) -> Vec<u32> {
        line.split_whitespace().map(|t| self.id_or_unk(t)).collect()
    }

    /// Join ids back into a line.
    pub fn decode_ids(&self, ids: &[u32]) -> Result<String> {
        let mut parts = Vec::with_capacity(ids.len());
        for &id in ids {
            parts.push(self.token(id)?);
        }
        Ok(parts.join(" "))
    }
}
