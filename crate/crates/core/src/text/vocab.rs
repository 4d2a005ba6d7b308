use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::lexicon::{is_pseudo_token, pseudo_token, Lexicon, MAX_PSEUDO_TOKENS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;
    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Lexicon words, template words, then the pseudo-tokens.
    pub fn from_lexicon(lex: &Lexicon) -> Result<Self> {
        lex.validate()?;
        let mut tokens: Vec<String> = Vec::new();
        for w in lex.nouns.iter().chain(&lex.adjectives).chain(&lex.prepositions) {
            tokens.push(w.clone());
        }
        tokens.extend(lex.template_words());
        tokens.extend((0..MAX_PSEUDO_TOKENS).map(pseudo_token));
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> Result<TokenId> {
        self.index.get(word).copied().ok_or_else(|| Error::UnknownToken(word.to_string()))
    }

    pub fn word(&self, id: TokenId) -> &str {
        &self.tokens[id.index()]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pseudo_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.tokens.iter().enumerate().filter(|(_, t)| is_pseudo_token(t)).map(|(i, _)| TokenId(i as u32))
    }
}
