use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::parse::CaptionParse;
use crate::error::{Error, Result};

/// Which caption words become learnable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Every non-neutral word: nouns, adjectives and prepositions.
    All,
    /// Only the concept nouns.
    One,
    /// Per-scene sets: the nouns plus that scene's relation words.
    Diverse,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Strategy::All),
            "one" => Ok(Strategy::One),
            "diverse" => Ok(Strategy::Diverse),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::All => "all",
            Strategy::One => "one",
            Strategy::Diverse => "diverse",
        })
    }
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnSelection {
    pub strategy: Strategy,
    pub scene_id: Option<String>,
    pub learnable_tokens: BTreeSet<String>,
}

pub fn select_learnable(parse: &CaptionParse, strategy: Strategy, scene_id: Option<&str>) -> Result<LearnSelection> {
    let nouns = parse.nouns.iter().cloned();
    let learnable_tokens: BTreeSet<String> = match strategy {
        Strategy::One => nouns.collect(),
        Strategy::All => nouns.chain(parse.adjectives.iter().cloned()).chain(parse.prepositions.iter().cloned()).collect(),
        Strategy::Diverse => {
            if scene_id.is_none() {
                return Err(Error::InvalidArgument("diverse selection needs a scene id".into()));
            }
            nouns
                .chain(parse.prepositions.iter().filter(|p| !ARTICLES.contains(&p.as_str())).cloned())
                .collect()
        }
    };
    Ok(LearnSelection { strategy, scene_id: scene_id.map(str::to_string), learnable_tokens })
}

impl LearnSelection {
    pub fn contains(&self, word: &str) -> bool {
        self.learnable_tokens.contains(word)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_caption, Lexicon};

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn one_and_all_on_two_concept_caption() {
        let lex = Lexicon::default();
        let p = parse_caption("a photo of a brown <n1> and a green <n2>", &lex).unwrap();
        let one = select_learnable(&p, Strategy::One, None).unwrap();
        assert_eq!(one.learnable_tokens, set(&["<n1>", "<n2>"]));
        let all = select_learnable(&p, Strategy::All, None).unwrap();
        assert_eq!(all.learnable_tokens, set(&["brown", "<n1>", "and", "a", "green", "<n2>"]));
        assert!(!all.contains("photo"));
        assert!(one.learnable_tokens.is_subset(&all.learnable_tokens));
    }

    #[test]
    fn diverse_is_per_scene() {
        let lex = Lexicon::default();
        let p1 = parse_caption("a brown <n1> on a green <n2>", &lex).unwrap();
        let p2 = parse_caption("a brown <n1> beside a green <n2>", &lex).unwrap();
        assert!(select_learnable(&p1, Strategy::Diverse, None).is_err());
        let s1 = select_learnable(&p1, Strategy::Diverse, Some("s1")).unwrap();
        let s2 = select_learnable(&p2, Strategy::Diverse, Some("s2")).unwrap();
        assert_eq!(s1.learnable_tokens, set(&["<n1>", "<n2>", "on"]));
        assert_eq!(s2.learnable_tokens, set(&["<n1>", "<n2>", "beside"]));
        assert_ne!(s1.learnable_tokens, s2.learnable_tokens);
    }
}
