//! Verb/function-word lexicon and the temporal keyword list, loaded from
//! UTF-8 resource files (one entry per line, `#` comments).

use crate::error::{CoreError, Result};
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

const VERBS: &str = include_str!("resources/verbs.txt");
const STOPVERBS: &str = include_str!("resources/stopverbs.txt");
const FUNC_WORDS: &str = include_str!("resources/func_words.txt");
const TEMPORAL_KEYWORDS: &str = include_str!("resources/temporal_keywords.txt");

#[derive(Debug, Clone)]
pub struct Lexicon {
    verbs: BTreeSet<String>,
    stopverbs: BTreeSet<String>,
    func_words: BTreeSet<String>,
    temporal_keywords: Vec<Vec<String>>,
}

fn parse_lines(text: &str) -> impl Iterator<Item = String> + '_ {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
}

impl Lexicon {
    /// The shipped resource files, parsed once.
    pub fn builtin() -> &'static Lexicon {
        static BUILTIN: OnceLock<Lexicon> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            Lexicon::from_strs(VERBS, STOPVERBS, FUNC_WORDS, TEMPORAL_KEYWORDS)
        })
    }

    pub fn from_strs(verbs: &str, stopverbs: &str, func_words: &str, keywords: &str) -> Self {
        Lexicon {
            verbs: parse_lines(verbs).collect(),
            stopverbs: parse_lines(stopverbs).collect(),
            func_words: parse_lines(func_words).collect(),
            temporal_keywords: parse_lines(keywords)
                .map(|l| l.split_whitespace().map(str::to_string).collect())
                .collect(),
        }
    }

    /// Builtin lexicon with the temporal keyword list replaced by a file.
    pub fn with_keywords_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let mut lex = Lexicon::builtin().clone();
        lex.temporal_keywords = parse_lines(&text)
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect();
        Ok(lex)
    }

    /// Builtin lexicon with the verb list replaced by a file.
    pub fn with_verbs_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let mut lex = Lexicon::builtin().clone();
        lex.verbs = parse_lines(&text).collect();
        Ok(lex)
    }

    /// Lemma lookup with -ing/-ed/-s suffix stripping. Stripping never
    /// empties a token (minimum stem lengths are enforced).
    pub fn verb_lemma(&self, word_lower: &str) -> Option<String> {
        if self.verbs.contains(word_lower) {
            return Some(word_lower.to_string());
        }
        for cand in lemma_candidates(word_lower) {
            if self.verbs.contains(&cand) {
                return Some(cand);
            }
        }
        None
    }

    /// Auxiliaries/copulas that cannot head an action phrase.
    pub fn is_stopverb(&self, word_lower: &str) -> bool {
        if self.stopverbs.contains(word_lower) {
            return true;
        }
        lemma_candidates(word_lower)
            .into_iter()
            .any(|c| self.stopverbs.contains(&c))
    }

    pub fn is_func(&self, word_lower: &str) -> bool {
        self.func_words.contains(word_lower)
    }

    pub fn temporal_keywords(&self) -> &[Vec<String>] {
        &self.temporal_keywords
    }

    pub fn set_temporal_keywords(&mut self, keywords: Vec<Vec<String>>) {
        self.temporal_keywords = keywords;
    }

    pub fn add_temporal_keyword(&mut self, phrase: &str) {
        self.temporal_keywords.push(
            phrase
                .to_lowercase()
                .split_whitespace()
                .map(str::to_string)
                .collect(),
        );
    }
}

/// Candidate lemmas for an inflected form: walk(-s/-es), carri(-es -> carry),
/// mov(-ing -> move), stopp(-ed -> stop), ...
fn lemma_candidates(word: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut push_stem_family = |stem: &str| {
        if stem.len() >= 2 {
            out.push(stem.to_string());
            out.push(format!("{stem}e"));
            let bytes = stem.as_bytes();
            if stem.len() >= 3 && bytes[stem.len() - 1] == bytes[stem.len() - 2] {
                out.push(stem[..stem.len() - 1].to_string());
            }
        }
    };
    if let Some(stem) = word.strip_suffix("ing") {
        push_stem_family(stem);
    }
    if let Some(stem) = word.strip_suffix("ed") {
        push_stem_family(stem);
    }
    if let Some(stem) = word.strip_suffix("ies") {
        if !stem.is_empty() {
            out.push(format!("{stem}y"));
        }
    } else if let Some(stem) = word.strip_suffix("es") {
        if stem.len() >= 2 {
            out.push(stem.to_string());
        }
    }
    if let Some(stem) = word.strip_suffix('s') {
        if stem.len() >= 2 && !stem.ends_with('s') {
            out.push(stem.to_string());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_rules_find_expected_lemmas() {
        let lex = Lexicon::builtin();
        assert_eq!(lex.verb_lemma("moving").as_deref(), Some("move"));
        assert_eq!(lex.verb_lemma("raising").as_deref(), Some("raise"));
        assert_eq!(lex.verb_lemma("walks").as_deref(), Some("walk"));
        assert_eq!(lex.verb_lemma("carries").as_deref(), Some("carry"));
        assert_eq!(lex.verb_lemma("jumped").as_deref(), Some("jump"));
        assert_eq!(lex.verb_lemma("sitting").as_deref(), Some("sit"));
        assert_eq!(lex.verb_lemma("video"), None);
        assert_eq!(lex.verb_lemma("train"), None);
        assert_eq!(lex.verb_lemma("taken"), None);
    }

    #[test]
    fn stopverbs_cover_inflections() {
        let lex = Lexicon::builtin();
        for w in ["is", "are", "was", "does", "did", "happens", "happening", "doing"] {
            assert!(lex.is_stopverb(w), "{w} should be a stopverb");
        }
        assert!(!lex.is_stopverb("moving"));
    }

    #[test]
    fn stripping_never_empties() {
        for w in ["s", "es", "ed", "ing", "ies"] {
            for c in lemma_candidates(w) {
                assert!(!c.is_empty());
            }
        }
    }

    #[test]
    fn keyword_list_contains_the_core_syntax_words() {
        let lex = Lexicon::builtin();
        for w in ["before", "after", "when", "while"] {
            assert!(lex
                .temporal_keywords()
                .iter()
                .any(|k| k.len() == 1 && k[0] == w));
        }
    }
}
