//! Rule-based shallow question parsing: tokenization, action-phrase
//! extraction, and temporal-sensitivity classification.
//!
//! The tagger is a deterministic lexicon/suffix chunker. A word is VERB when
//! its surface or a suffix-stripped lemma (-ing/-ed/-s families) is in the
//! verb lexicon and it is not preceded by a determiner; auxiliaries from the
//! stopverb list are VERB too but never head a phrase. Candidate action
//! phrases start at a non-stopverb VERB and run right until the next VERB, a
//! clause boundary, or the end of text; the shortest candidate wins, ties
//! broken by earliest start.
//!
//! Manifests can carry pre-parsed `action_phrase` fields; those always
//! override this chunker.

mod lexicon;

pub use lexicon::Lexicon;

/// Coarse part-of-speech tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Verb,
    Noun,
    Func,
    Other,
}

#[derive(Debug, Clone)]
pub struct Token {
    /// Byte offsets into the original text.
    pub start: usize,
    pub end: usize,
    /// Lower-cased surface form.
    pub lower: String,
    pub tag: Tag,
    /// Verb lemma when the VERB tag came from the lexicon.
    pub lemma: Option<String>,
}

/// Tokenized question; slicing the original text at the stored offsets
/// reconstructs every surface form.
#[derive(Debug, Clone)]
pub struct TokenSeq {
    pub text: String,
    pub tokens: Vec<Token>,
}

impl TokenSeq {
    pub fn surface(&self, i: usize) -> &str {
        &self.text[self.tokens[i].start..self.tokens[i].end]
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-'
}

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "her", "his", "their", "its", "my", "your", "our", "this", "that", "these",
    "those",
];

/// Whitespace/punctuation tokenization plus lexicon tagging.
pub fn tokenize(text: &str, lex: &Lexicon) -> TokenSeq {
    let mut raw: Vec<(usize, usize)> = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            if word_start.is_none() {
                word_start = Some(i);
            }
        } else {
            if let Some(s) = word_start.take() {
                raw.push((s, i));
            }
            if !c.is_whitespace() {
                raw.push((i, i + c.len_utf8()));
            }
        }
    }
    if let Some(s) = word_start {
        raw.push((s, text.len()));
    }

    let mut tokens = Vec::with_capacity(raw.len());
    let mut prev_word_lower: Option<String> = None;
    for (start, end) in raw {
        let surface = &text[start..end];
        let lower = surface.to_lowercase();
        let is_word = surface.chars().next().map(is_word_char).unwrap_or(false);
        let (tag, lemma) = if !is_word {
            (Tag::Other, None)
        } else {
            let det_before = prev_word_lower
                .as_deref()
                .map(|p| DETERMINERS.contains(&p))
                .unwrap_or(false);
            let lemma = lex.verb_lemma(&lower);
            let verbish = lemma.is_some() || lex.is_stopverb(&lower);
            if verbish && !det_before {
                (Tag::Verb, lemma)
            } else if lex.is_func(&lower) {
                (Tag::Func, None)
            } else if surface.chars().any(|c| c.is_alphabetic()) {
                (Tag::Noun, None)
            } else {
                (Tag::Other, None)
            }
        };
        if is_word {
            prev_word_lower = Some(lower.clone());
        }
        tokens.push(Token {
            start,
            end,
            lower,
            tag,
            lemma,
        });
    }
    TokenSeq {
        text: text.to_string(),
        tokens,
    }
}

const BOUNDARY_PUNCT: &[&str] = &["?", ",", ".", "!", ";", ":"];
const BOUNDARY_WORDS: &[&str] = &["before", "after", "when"];

/// Is the token at `i` a clause boundary? "while" only counts outside the
/// noun use "a while"/"the while"; "near the end" is a three-token marker.
fn is_clause_boundary(seq: &TokenSeq, i: usize) -> bool {
    let t = &seq.tokens[i];
    if BOUNDARY_PUNCT.contains(&t.lower.as_str()) || BOUNDARY_WORDS.contains(&t.lower.as_str()) {
        return true;
    }
    if t.lower == "while" {
        let prev = i.checked_sub(1).map(|p| seq.tokens[p].lower.as_str());
        return !matches!(prev, Some("a") | Some("the"));
    }
    if t.lower == "near"
        && i + 2 < seq.tokens.len()
        && seq.tokens[i + 1].lower == "the"
        && seq.tokens[i + 2].lower == "end"
    {
        return true;
    }
    false
}

/// Shortest verb-headed contiguous phrase of the question, if any.
pub fn extract_action_phrase(text: &str, lex: &Lexicon) -> Option<String> {
    let seq = tokenize(text, lex);
    let n = seq.tokens.len();
    let mut best: Option<(usize, usize, usize)> = None; // (token_count, start, end_excl)
    for i in 0..n {
        let t = &seq.tokens[i];
        if t.tag != Tag::Verb || lex.is_stopverb(&t.lower) {
            continue;
        }
        let mut j = i + 1;
        while j < n && seq.tokens[j].tag != Tag::Verb && !is_clause_boundary(&seq, j) {
            j += 1;
        }
        let count = j - i;
        let replace = match best {
            None => true,
            Some((c, _, _)) => count < c,
        };
        if replace {
            best = Some((count, i, j));
        }
    }
    best.map(|(_, i, j)| seq.text[seq.tokens[i].start..seq.tokens[j - 1].end].to_string())
}

/// True iff the text contains a temporal keyword as whole word(s).
pub fn classify_temporal_sensitivity(text: &str, lex: &Lexicon) -> bool {
    let seq = tokenize(text, lex);
    let toks = &seq.tokens;
    for kw in lex.temporal_keywords() {
        if kw.is_empty() || kw.len() > toks.len() {
            continue;
        }
        for start in 0..=(toks.len() - kw.len()) {
            let all = kw
                .iter()
                .enumerate()
                .all(|(o, w)| toks[start + o].lower == *w);
            if !all {
                continue;
            }
            if kw.len() == 1 && kw[0] == "as" {
                // clause-initial "as" only
                let clause_initial = start == 0
                    || matches!(toks[start - 1].lower.as_str(), "," | ";");
                if !clause_initial {
                    continue;
                }
            }
            return true;
        }
    }
    false
}
