use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::tokenize::{COLON, ITEM_SEPARATOR};
use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

/// Bijective token/id table with the special tokens at ids 0..4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Specials, then the memory separators, then every other token in
    /// lexicographic order.
    pub fn build<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut all: Vec<String> = [PAD, BOS, EOS, UNK, COLON, ITEM_SEPARATOR].map(String::from).into();
        let rest: BTreeSet<String> = tokens
            .into_iter()
            .map(|t| t.as_ref().to_string())
            .filter(|t| !all.contains(t))
            .collect();
        all.extend(rest);
        Self::from_tokens(all).expect("constructed without duplicates")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let specials = [PAD, BOS, EOS, UNK];
        if tokens.len() < specials.len() || tokens.iter().zip(specials).any(|(t, s)| t != s) {
            return Err(Error::Compatibility("vocabulary must start with <pad> <bos> <eos> <unk>".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Compatibility(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or the unknown id.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(UNK)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids plus the number of tokens that fell back to `<unk>`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> (Vec<usize>, usize) {
        let mut unknown = 0;
        let ids = tokens
            .iter()
            .map(|t| {
                self.get(t.as_ref()).unwrap_or_else(|| {
                    unknown += 1;
                    UNK_ID
                })
            })
            .collect();
        (ids, unknown)
    }

    /// Tokens for `ids`, dropping pad/bos/eos.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| !matches!(id, PAD_ID | BOS_ID | EOS_ID))
            .map(|&id| self.token(id).to_string())
            .collect()
    }

    pub fn decode_text(&self, ids: &[usize]) -> String {
        self.decode(ids).join(" ")
    }

    /// Fraction of `tokens` missing from this vocabulary.
    pub fn oov_rate<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        if tokens.is_empty() {
            return 0.0;
        }
        let missing = tokens.iter().filter(|t| self.get(t.as_ref()).is_none()).count();
        missing as f64 / tokens.len() as f64
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;
    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}
