//! Tokenization and vocabularies for language-model corpora.

use std::collections::HashMap;

pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenMode {
    /// Whitespace-separated words, with an end-of-sentence token per line.
    Word,
    /// One token per Unicode scalar value, newlines included.
    Char,
}

/// Token ↔ index map. Index 0 is `<eos>`, index 1 is `<unk>`; other tokens
/// follow in order of first appearance.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let mut v = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
        };
        v.insert(EOS);
        v.insert(UNK);
        v
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> usize {
        0
    }

    pub fn unk(&self) -> usize {
        1
    }

    fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.index.insert(token.to_string(), i);
        self.tokens.push(token.to_string());
        i
    }

    /// Index of `token`, or `<unk>` if it is not in the vocabulary.
    pub fn encode(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.unk())
    }

    pub fn decode(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn decode_all(&self, indices: &[usize]) -> Vec<&str> {
        indices.iter().map(|&i| self.decode(i).unwrap_or(UNK)).collect()
    }
}

/// Splits `text` into tokens; word mode emits `<eos>` after every line.
pub fn tokenize(text: &str, mode: TokenMode) -> Vec<String> {
    match mode {
        TokenMode::Word => {
            let mut out = Vec::new();
            for line in text.lines() {
                out.extend(line.split_whitespace().map(str::to_string));
                out.push(EOS.to_string());
            }
            out
        }
        TokenMode::Char => text.chars().map(|c| c.to_string()).collect(),
    }
}

/// Builds a vocabulary from `text` and returns it with the indexed text.
pub fn tokenize_and_index(text: &str, mode: TokenMode) -> (Vocabulary, Vec<usize>) {
    let mut vocab = Vocabulary::default();
    let ids = tokenize(text, mode).iter().map(|t| vocab.insert(t)).collect();
    (vocab, ids)
}

/// Indexes `text` with an existing vocabulary, mapping unseen tokens to
/// `<unk>`.
pub fn index_with(vocab: &Vocabulary, text: &str, mode: TokenMode) -> Vec<usize> {
    tokenize(text, mode).iter().map(|t| vocab.encode(t)).collect()
}
