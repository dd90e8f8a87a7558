use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered symbol set. Class index `len()` is reserved for the CTC blank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Alphabet {
    symbols: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, usize>,
}

impl Alphabet {
    /// Alphabet that must contain every lowercase letter, since misspellings
    /// substitute from `a..=z`.
    pub fn new(symbols: &str) -> Result<Self> {
        let alphabet = Self::encoding_only(symbols)?;
        if let Some(missing) = ('a'..='z').find(|c| !alphabet.index.contains_key(c)) {
            return Err(Error::Config(format!("alphabet lacks lowercase {missing:?}")));
        }
        Ok(alphabet)
    }

    /// Alphabet for one-hot encoding only; any set of unique symbols.
    pub fn encoding_only(symbols: &str) -> Result<Self> {
        let symbols: Vec<char> = symbols.chars().collect();
        if symbols.is_empty() {
            return Err(Error::Config("empty alphabet".into()));
        }
        let mut index = HashMap::new();
        for (i, &c) in symbols.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::Config(format!("duplicate alphabet symbol {c:?}")));
            }
        }
        Ok(Self { symbols, index })
    }

    /// The 26 lowercase ASCII letters.
    pub fn lowercase() -> Self {
        Self::new("abcdefghijklmnopqrstuvwxyz").expect("lowercase alphabet is valid")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank_index(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn contains_all(&self, text: &str) -> bool {
        text.chars().all(|c| self.index.contains_key(&c))
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.index_of(c)
                    .ok_or_else(|| Error::Encoding(format!("character {c:?} is not in the alphabet")))
            })
            .collect()
    }

    /// Maps class indices back to text, skipping the blank and unknown indices.
    pub fn decode(&self, indices: &[usize]) -> String {
        indices.iter().filter_map(|&i| self.symbols.get(i)).collect()
    }
}

impl TryFrom<String> for Alphabet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::new(&s)
    }
}

impl From<Alphabet> for String {
    fn from(a: Alphabet) -> String {
        a.symbols.into_iter().collect()
    }
}
