use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed vocabulary of caption words, grouped by role.
///
/// Articles (`a`, `an`, `the`) are listed with the prepositions: inside a
/// caption they are learnable under the `all` strategy, while the same word
/// inside a neutral template prefix stays frozen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub nouns: Vec<String>,
    pub adjectives: Vec<String>,
    pub prepositions: Vec<String>,
    pub neutral_templates: Vec<String>,
}

/// Generic noun used to initialise new pseudo-token rows.
pub const CLASS_NOUN: &str = "shape";

/// Maximum number of pseudo-tokens `<n1>`..`<n5>`.
pub const MAX_PSEUDO_TOKENS: usize = 5;

pub fn pseudo_token(index: usize) -> String {
    format!("<n{}>", index + 1)
}

pub fn is_pseudo_token(word: &str) -> bool {
    word.len() > 3
        && word.starts_with("<n")
        && word.ends_with('>')
        && word[2..word.len() - 1].parse::<usize>().is_ok_and(|i| (1..=MAX_PSEUDO_TOKENS).contains(&i))
}

impl Default for Lexicon {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        Lexicon {
            nouns: s(&[
                "ball", "bear", "melon", "box", "dice", "brick", "tent", "hat", "kite", "donut",
                "coin", "wheel", "flag", "mat", "towel", CLASS_NOUN,
            ]),
            adjectives: s(&[
                "red", "green", "blue", "yellow", "brown", "white", "purple", "orange", "pink",
                "black", "striped", "dotted",
            ]),
            prepositions: s(&["a", "an", "the", "and", "on", "beside", "with", "near"]),
            neutral_templates: s(&[
                "a photo of",
                "a rendering of",
                "a sketch of",
                "a picture of",
                "a drawing of",
                "an image of",
                "a cropped photo of",
                "a good photo of",
            ]),
        }
    }
}

impl Lexicon {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lex: Lexicon = serde_json::from_str(&text)?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for w in self.nouns.iter().chain(&self.adjectives).chain(&self.prepositions) {
            if is_pseudo_token(w) {
                return Err(Error::Config(format!("lexicon word `{w}` collides with a pseudo-token")));
            }
            if !seen.insert(w.as_str()) {
                return Err(Error::Config(format!("lexicon word `{w}` listed twice")));
            }
        }
        if self.neutral_templates.is_empty() {
            return Err(Error::Config("neutral template pool is empty".into()));
        }
        Ok(())
    }

    /// Words used by templates that are not already caption words.
    pub fn template_words(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in &self.neutral_templates {
            for w in t.split_whitespace() {
                let w = w.to_lowercase();
                let known = self.nouns.contains(&w) || self.adjectives.contains(&w) || self.prepositions.contains(&w);
                if !known && !out.contains(&w) {
                    out.push(w);
                }
            }
        }
        out
    }

    pub fn is_noun(&self, w: &str) -> bool {
        is_pseudo_token(w) || self.nouns.iter().any(|n| n == w)
    }

    pub fn is_adjective(&self, w: &str) -> bool {
        self.adjectives.iter().any(|n| n == w)
    }

    pub fn is_preposition(&self, w: &str) -> bool {
        self.prepositions.iter().any(|n| n == w)
    }
}
