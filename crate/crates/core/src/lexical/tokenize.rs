use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::corpus::{read_lines, Dataset};
use crate::error::{Error, Result};
use crate::text::{fold_case, is_cjk, is_word_char};

/// Deterministic text-to-tokens mapping. The empty string always yields no
/// tokens.
pub trait Tokenize: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

impl<T: Tokenize + ?Sized> Tokenize for Box<T> {
    fn tokenize(&self, text: &str) -> Vec<String> {
        (**self).tokenize(text)
    }
}

impl<T: Tokenize + ?Sized> Tokenize for &T {
    fn tokenize(&self, text: &str) -> Vec<String> {
        (**self).tokenize(text)
    }
}

/// Default tokenizer: lowercased alphanumeric runs, one token per CJK
/// codepoint, everything else separates.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnigramTokenizer;

impl Tokenize for UnigramTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut run = String::new();
        for c in text.chars() {
            if is_cjk(c) {
                flush(&mut run, &mut out);
                out.push(c.to_string());
            } else if c.is_alphanumeric() {
                run.push(fold_case(c));
            } else {
                flush(&mut run, &mut out);
            }
        }
        flush(&mut run, &mut out);
        out
    }
}

fn flush(run: &mut String, out: &mut Vec<String>) {
    if !run.is_empty() {
        out.push(std::mem::take(run));
    }
}

/// Every non-whitespace character is a token.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharTokenizer;

impl Tokenize for CharTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect()
    }
}

/// Forward maximum matching against a word list.
///
/// Within each run of word characters the longest dictionary word starting
/// at the cursor is taken. Without a match a CJK codepoint becomes a single
/// token and a non-CJK alphanumeric run is kept whole. A match may not end
/// inside a non-CJK alphanumeric run.
#[derive(Debug, Clone, Default)]
pub struct DictionaryTokenizer {
    words: HashSet<String>,
    max_chars: usize,
}

impl DictionaryTokenizer {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut dict = Self::default();
        for w in words {
            let w: String = w.as_ref().trim().chars().map(fold_case).collect();
            let n = w.chars().count();
            if n == 0 {
                continue;
            }
            dict.max_chars = dict.max_chars.max(n);
            dict.words.insert(w);
        }
        dict
    }

    /// One word per line; anything after the first whitespace (frequency,
    /// part-of-speech columns) is ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let lines = read_lines(path)?;
        Ok(Self::new(lines.iter().filter_map(|(_, l)| l.split_whitespace().next())))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    fn segment(&self, span: &[char], out: &mut Vec<String>) {
        let latin = |c: char| !is_cjk(c) && c.is_alphanumeric();
        let mut i = 0;
        while i < span.len() {
            let longest = (2..=self.max_chars.min(span.len() - i)).rev().find(|&len| {
                let end = i + len;
                if latin(span[end - 1]) && end < span.len() && latin(span[end]) {
                    return false;
                }
                let cand: String = span[i..end].iter().collect();
                self.words.contains(&cand)
            });
            let len = match longest {
                Some(len) => len,
                None if is_cjk(span[i]) => 1,
                None => span[i..].iter().take_while(|&&c| latin(c)).count().max(1),
            };
            out.push(span[i..i + len].iter().collect());
            i += len;
        }
    }
}

impl Tokenize for DictionaryTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut span = Vec::new();
        for c in text.chars() {
            if is_word_char(c) {
                span.push(fold_case(c));
            } else if !span.is_empty() {
                self.segment(&span, &mut out);
                span.clear();
            }
        }
        if !span.is_empty() {
            self.segment(&span, &mut out);
        }
        out
    }
}

/// Tokens supplied externally, keyed by the exact text they were produced
/// from. Unknown texts fall back to [`UnigramTokenizer`].
#[derive(Debug, Clone, Default)]
pub struct PretokenizedTokenizer {
    by_text: HashMap<String, Vec<String>>,
}

impl PretokenizedTokenizer {
    pub fn new(by_text: HashMap<String, Vec<String>>) -> Self {
        Self { by_text }
    }

    /// Joins `id \t space-joined-tokens` files against a dataset's passage
    /// and query texts. Either file may be omitted.
    pub fn for_dataset(
        d: &Dataset,
        passage_tokens: Option<&Path>,
        query_tokens: Option<&Path>,
    ) -> Result<Self> {
        let mut by_text = HashMap::new();
        if let Some(path) = passage_tokens {
            for (id, tokens) in load_token_file(path)? {
                let p = d.passage(&id).ok_or(Error::DanglingId {
                    kind: "passage",
                    id: id.clone(),
                })?;
                by_text.insert(p.text.clone(), tokens);
            }
        }
        if let Some(path) = query_tokens {
            for (id, tokens) in load_token_file(path)? {
                let q = d.query(&id).ok_or(Error::DanglingId {
                    kind: "query",
                    id: id.clone(),
                })?;
                by_text.insert(q.text.clone(), tokens);
            }
        }
        Ok(Self { by_text })
    }

    pub fn len(&self) -> usize {
        self.by_text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_text.is_empty()
    }
}

impl Tokenize for PretokenizedTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        match self.by_text.get(text) {
            Some(tokens) => tokens.clone(),
            None => UnigramTokenizer.tokenize(text),
        }
    }
}

/// Reads `id \t space-joined-tokens` lines.
pub fn load_token_file(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let (id, tokens) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, n, "expected `id<TAB>tokens`"))?;
            Ok((
                id.to_owned(),
                tokens.split_whitespace().map(str::to_owned).collect(),
            ))
        })
        .collect()
}
