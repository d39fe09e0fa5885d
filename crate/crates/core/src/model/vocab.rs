//! Token vocabulary shared by the text encoder, built from the training
//! manifest with the same tokenizer the parser uses.

use crate::qparse::{self, Lexicon};

pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: std::collections::HashMap<String, usize>,
}

impl Vocab {
    /// Collect lower-cased token surfaces from all texts; id 0 is `<unk>`,
    /// the rest are sorted for determinism.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vocab {
        let lex = Lexicon::builtin();
        let mut set = std::collections::BTreeSet::new();
        for text in texts {
            let seq = qparse::tokenize(text, lex);
            for tok in &seq.tokens {
                set.insert(tok.lower.clone());
            }
        }
        let mut tokens = vec![UNK.to_string()];
        tokens.extend(set);
        Vocab::from_tokens(tokens)
    }

    /// Rebuild from a stored token list (checkpoint loading). Token 0 must
    /// be `<unk>`.
    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        debug_assert_eq!(tokens.first().map(String::as_str), Some(UNK));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokenize and map to ids; unknown surfaces become `<unk>` (id 0).
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let lex = Lexicon::builtin();
        let seq = qparse::tokenize(text, lex);
        seq.tokens
            .iter()
            .map(|t| self.index.get(&t.lower).copied().unwrap_or(0))
            .collect()
    }

    /// Ids for the `[question ; answer]` pair text.
    pub fn encode_pair(&self, question: &str, answer: &str) -> Vec<usize> {
        let mut ids = self.encode(question);
        ids.extend(self.encode(answer));
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_words_map_to_unk() {
        let vocab = Vocab::build(["what happens after waving?"]);
        let ids = vocab.encode("what happens after zorping?");
        assert_eq!(*ids.last().unwrap(), 1); // the "?" token is known
        assert_eq!(ids[3], 0); // "zorping" is not
    }

    #[test]
    fn build_is_deterministic_and_sorted() {
        let a = Vocab::build(["b a c", "a d"]);
        let b = Vocab::build(["a d", "b a c"]);
        assert_eq!(a, b);
        assert_eq!(a.tokens()[0], UNK);
        let mut sorted = a.tokens()[1..].to_vec();
        sorted.sort();
        assert_eq!(&a.tokens()[1..], sorted.as_slice());
    }

    #[test]
    fn encode_pair_concatenates() {
        let vocab = Vocab::build(["what happens", "waving the flag"]);
        let pair = vocab.encode_pair("what happens", "waving the flag");
        assert_eq!(pair.len(), 5);
    }
}
