use serde::{Deserialize, Serialize};

use super::lexicon::Lexicon;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Neutral,
    Noun,
    Adjective,
    Preposition,
}

/// A caption split into the neutral prefix and the noun / adjective /
/// preposition subgroups. Every word of `full_sequence` has exactly one
/// entry in `roles`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionParse {
    pub neutral_prefix: Vec<String>,
    pub nouns: Vec<String>,
    pub adjectives: Vec<String>,
    pub prepositions: Vec<String>,
    pub full_sequence: Vec<String>,
    pub roles: Vec<Role>,
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| if w.starts_with('<') { w.to_string() } else { w.to_lowercase() })
        .collect()
}

/// Splits `text` into subgroups. A leading neutral template (longest match
/// from the lexicon's pool) becomes the neutral prefix.
pub fn parse_caption(text: &str, lex: &Lexicon) -> Result<CaptionParse> {
    let seq = words(text);
    if seq.is_empty() {
        return Err(Error::Empty("caption has no tokens".into()));
    }
    let prefix_len = lex
        .neutral_templates
        .iter()
        .map(|t| words(t))
        .filter(|t| t.len() < seq.len() && seq.starts_with(t))
        .map(|t| t.len())
        .max()
        .unwrap_or(0);

    let mut parse = CaptionParse {
        neutral_prefix: seq[..prefix_len].to_vec(),
        nouns: Vec::new(),
        adjectives: Vec::new(),
        prepositions: Vec::new(),
        full_sequence: seq.clone(),
        roles: vec![Role::Neutral; prefix_len],
    };
    for w in &seq[prefix_len..] {
        let role = if lex.is_noun(w) {
            parse.nouns.push(w.clone());
            Role::Noun
        } else if lex.is_adjective(w) {
            parse.adjectives.push(w.clone());
            Role::Adjective
        } else if lex.is_preposition(w) {
            parse.prepositions.push(w.clone());
            Role::Preposition
        } else {
            return Err(Error::UnknownToken(w.clone()));
        };
        parse.roles.push(role);
    }
    Ok(parse)
}

impl CaptionParse {
    /// Caption body without the neutral prefix.
    pub fn body(&self) -> &[String] {
        &self.full_sequence[self.neutral_prefix.len()..]
    }

    /// Noun–adjective pairs by adjacency. Fails unless every noun is
    /// immediately preceded by an adjective and no adjective is left over.
    pub fn adjective_bindings(&self) -> Result<Vec<(String, String)>> {
        if self.adjectives.len() != self.nouns.len() {
            return Err(Error::Parse(format!(
                "{} adjectives for {} nouns",
                self.adjectives.len(),
                self.nouns.len()
            )));
        }
        let mut out = Vec::with_capacity(self.nouns.len());
        for (i, role) in self.roles.iter().enumerate() {
            if *role == Role::Noun {
                if i == 0 || self.roles[i - 1] != Role::Adjective {
                    return Err(Error::Parse(format!(
                        "noun `{}` has no adjacent adjective",
                        self.full_sequence[i]
                    )));
                }
                out.push((self.full_sequence[i].clone(), self.full_sequence[i - 1].clone()));
            }
        }
        Ok(out)
    }

    pub fn with_prefix(&self, prefix: &[String]) -> CaptionParse {
        let body = self.body().to_vec();
        let mut full = prefix.to_vec();
        full.extend(body);
        let mut roles = vec![Role::Neutral; prefix.len()];
        roles.extend_from_slice(&self.roles[self.neutral_prefix.len()..]);
        CaptionParse { neutral_prefix: prefix.to_vec(), full_sequence: full, roles, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex_with(extra_adj: &[&str]) -> Lexicon {
        let mut l = Lexicon::default();
        l.adjectives.extend(extra_adj.iter().map(|s| s.to_string()));
        l
    }

    #[test]
    fn brown_on_rolling() {
        let lex = lex_with(&["rolling"]);
        let p = parse_caption("a brown <n1> on a rolling <n2>", &lex).unwrap();
        assert_eq!(p.nouns, vec!["<n1>", "<n2>"]);
        assert_eq!(p.adjectives, vec!["brown", "rolling"]);
        assert_eq!(p.prepositions, vec!["a", "on", "a"]);
        assert!(p.neutral_prefix.is_empty());
        assert_eq!(
            p.adjective_bindings().unwrap(),
            vec![("<n1>".into(), "brown".into()), ("<n2>".into(), "rolling".into())]
        );
    }

    #[test]
    fn neutral_prefix_is_stripped_by_longest_match() {
        let lex = Lexicon::default();
        let p = parse_caption("A cropped photo of a red <n1> and a green <n2>", &lex).unwrap();
        assert_eq!(p.neutral_prefix, vec!["a", "cropped", "photo", "of"]);
        assert_eq!(p.prepositions, vec!["a", "and", "a"]);
        assert_eq!(p.roles.len(), p.full_sequence.len());
    }

    #[test]
    fn empty_caption_is_flagged() {
        assert!(matches!(parse_caption("   ", &Lexicon::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn unknown_word_is_named() {
        match parse_caption("a brown <n1> at times square", &Lexicon::default()) {
            Err(Error::UnknownToken(w)) => assert_eq!(w, "at"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unbalanced_adjectives_parse_but_fail_binding() {
        let p = parse_caption("a brown <n1> and a <n2>", &Lexicon::default()).unwrap();
        assert_eq!(p.adjectives.len(), 1);
        assert!(p.adjective_bindings().is_err());
    }
}
