//! Cased WordPiece tokenization: basic whitespace/punctuation splitting followed by greedy
//! longest-match-first sub-word decomposition with `##` continuation pieces.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

const MAX_CHARS_PER_WORD: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEncoding {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u32>,
}

impl TextEncoding {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct WordPieceTokenizer {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    unk: u32,
    cls: u32,
    sep: u32,
    pad: u32,
}

const TOY_WORDS: &[&str] = &[
    "the", "a", "an", "and", "or", "but", "not", "no", "yes", "is", "are", "was", "be", "to", "of",
    "in", "on", "at", "for", "with", "when", "you", "your", "me", "my", "i", "we", "they", "he",
    "she", "it", "that", "this", "what", "who", "how", "why", "one", "does", "do", "simply", "walk",
    "into", "all", "just", "like", "get", "got", "make", "time", "day", "people", "friend", "friends",
    "good", "bad", "great", "best", "worst", "love", "hate", "happy", "sad", "funny", "meme",
    "memes", "cat", "dog", "boss", "work", "school", "exam", "coffee", "code", "monday", "weekend",
    "moment", "finally", "pizza", "meeting", "awesome", "awful", "okay", "inspire", "lol", "irony",
    "rude", "zero", "bit", "quite", "extremely", "very", "so", "too", "much", "more", "when", "then",
    "now", "never", "always", "everyone", "nobody", "life", "world", "game", "win", "lose",
];

const TOY_SUFFIXES: &[&str] = &[
    "s", "es", "ed", "ing", "ly", "er", "est", "ness", "ful", "less", "able", "tion", "ment", "y",
];

impl WordPieceTokenizer {
    /// Builds a tokenizer from vocabulary entries in id order. The four special tokens
    /// `[PAD]`, `[UNK]`, `[CLS]` and `[SEP]` must be present.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            ids.entry(t.clone()).or_insert(i as u32);
        }
        let special = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| Error::Encoder(format!("vocabulary lacks special token {name}")))
        };
        Ok(WordPieceTokenizer {
            unk: special(UNK)?,
            cls: special(CLS)?,
            sep: special(SEP)?,
            pad: special(PAD)?,
            tokens,
            ids,
        })
    }

    /// Reads a `vocab.txt` file with one token per line.
    pub fn from_vocab_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
    }

    /// Small built-in vocabulary: special tokens, every printable ASCII character (plus `##`
    /// continuations of letters and digits) and a few hundred common words and suffixes.
    /// Any ASCII word decomposes without falling back to `[UNK]`.
    pub fn toy() -> Self {
        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP, MASK].iter().map(|s| s.to_string()).collect();
        for c in 33u8..=126 {
            tokens.push((c as char).to_string());
        }
        for c in (b'0'..=b'9').chain(b'A'..=b'Z').chain(b'a'..=b'z') {
            tokens.push(format!("##{}", c as char));
        }
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        for w in TOY_WORDS {
            for form in [w.to_string(), capitalize(w), w.to_uppercase()] {
                if seen.insert(form.clone()) {
                    tokens.push(form);
                }
            }
        }
        for s in TOY_SUFFIXES {
            let piece = format!("##{s}");
            if seen.insert(piece.clone()) {
                tokens.push(piece);
            }
        }
        Self::from_tokens(tokens).expect("toy vocabulary has all special tokens")
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    pub fn pad_id(&self) -> u32 {
        self.pad
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Sub-word pieces of `text`, without special tokens or truncation.
    pub fn wordpieces(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in basic_tokenize(text) {
            self.split_word(&word, &mut out);
        }
        out
    }

    fn split_word(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_CHARS_PER_WORD {
            out.push(self.unk);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut candidate: String = chars[start..end].iter().collect();
                if start > 0 {
                    candidate.insert_str(0, "##");
                }
                if let Some(&id) = self.ids.get(&candidate) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk);
                    return;
                }
            }
        }
        out.extend(pieces);
    }

    /// `[CLS] pieces… [SEP]`, with the pieces truncated from the right to fit `max_len`.
    /// All segment ids are zero.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Result<TextEncoding> {
        if max_len < 3 {
            return Err(Error::Encoder(format!(
                "max sequence length must be at least 3, got {max_len}"
            )));
        }
        let mut pieces = self.wordpieces(text);
        pieces.truncate(max_len - 2);
        let mut token_ids = Vec::with_capacity(pieces.len() + 2);
        token_ids.push(self.cls);
        token_ids.extend(pieces);
        token_ids.push(self.sep);
        let segment_ids = vec![0; token_ids.len()];
        Ok(TextEncoding {
            token_ids,
            segment_ids,
        })
    }

    /// Inverse of [`Self::wordpieces`] up to whitespace: special tokens are dropped,
    /// continuation pieces are glued to their predecessor and words are joined by one space.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if [self.cls, self.sep, self.pad].contains(&id) {
                continue;
            }
            let Some(tok) = self.token(id) else { continue };
            match tok.strip_prefix("##") {
                Some(rest) if !out.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        out
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c as u32,
            0x00A1..=0x00BF | 0x2010..=0x2027 | 0x2030..=0x205E | 0x3000..=0x303F | 0xFF01..=0xFF0F
            | 0xFF1A..=0xFF20 | 0xFF3B..=0xFF40 | 0xFF5B..=0xFF65)
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0x20000..=0x2A6DF | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F | 0x2B820..=0x2CEAF | 0xF900..=0xFAFF | 0x2F800..=0x2FA1F)
}

/// Whitespace split after control-character cleanup, with every punctuation mark and CJK
/// ideograph as its own word. Case is preserved.
fn basic_tokenize(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, words: &mut Vec<String>| {
        if !current.is_empty() {
            words.push(std::mem::take(current));
        }
    };
    for c in text.chars() {
        if c == '\0' || c == '\u{FFFD}' || (c.is_control() && !c.is_whitespace()) {
            continue;
        }
        if c.is_whitespace() {
            flush(&mut current, &mut words);
        } else if is_punctuation(c) || is_cjk(c) {
            flush(&mut current, &mut words);
            words.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    flush(&mut current, &mut words);
    words
}
