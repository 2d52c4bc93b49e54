use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const EOS: usize = 2;
pub const SELECT: usize = 3;
pub const YOU: usize = 4;
pub const THEM: usize = 5;

pub const RESERVED: [&str; 6] = ["<PAD>", "<UNK>", "<EOS>", "<SELECT>", "<YOU>", "<THEM>"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let mut v = Vocab::new();
        for t in tokens {
            v.add(&t);
        }
        v
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    /// Vocabulary holding only the reserved tokens.
    pub fn new() -> Self {
        let mut v = Vocab { tokens: Vec::new(), index: HashMap::new() };
        for t in RESERVED {
            v.add(t);
        }
        v
    }

    /// Reserved tokens followed by every distinct token of `utterances`, in sorted order.
    pub fn build<'a>(utterances: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut words: Vec<&str> = utterances.into_iter().flatten().map(String::as_str).collect();
        words.sort_unstable();
        words.dedup();
        let mut v = Vocab::new();
        for w in words {
            v.add(w);
        }
        v
    }

    pub fn add(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or("<UNK>", String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).filter(|l| !l.is_empty()).collect();
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(r) {
                return Err(Error::Record { path: path.display().to_string(), line: i + 1, message: format!("expected reserved token {r}") });
            }
        }
        Ok(Vocab::from(tokens))
    }
}

/// Lowercase, split on whitespace, and detach `. , ? !` into their own tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if matches!(ch, '.' | ',' | '?' | '!') {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.extend(ch.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocab::new();
        assert_eq!(v.id("<SELECT>"), SELECT);
        assert_eq!(v.id("<THEM>"), THEM);
        assert_eq!(v.id("zebra"), UNK);
    }

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(tokenize("Yes. Let's pick it!"), vec!["yes", ".", "let's", "pick", "it", "!"]);
    }

    #[test]
    fn file_round_trip() {
        let words = vec![tokenize("a dark dot"), tokenize("two small dots")];
        let v = Vocab::build(words.iter().map(Vec::as_slice));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        v.write(&p).unwrap();
        assert_eq!(Vocab::read(&p).unwrap(), v);
    }
}
