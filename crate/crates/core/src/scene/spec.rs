use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Mask, RgbImage};
use crate::text::pseudo_token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Ring,
    StripePatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Texture {
    Flat,
    Stripes,
    Dots,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutPolicy {
    #[default]
    NonOverlapping,
    AllowTouching,
}

/// One object in a scene: its caption words and how it is drawn.
/// `size_range` is the bounding diameter as a fraction of the canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptSpec {
    pub noun_token: String,
    pub adjective_token: String,
    pub shape_kind: ShapeKind,
    pub color: [u8; 3],
    pub texture: Texture,
    pub size_range: (f64, f64),
}

/// A caption word or the slot of concept `i` (expands to `{adj} <n{i+1}>`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptionPart {
    Word(String),
    Slot(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub concepts: Vec<ConceptSpec>,
    pub canvas_size: usize,
    pub background: [u8; 3],
    #[serde(default)]
    pub layout_policy: LayoutPolicy,
    pub template_caption: Vec<CaptionPart>,
}

pub const MIN_CONCEPTS: usize = 2;
pub const MAX_CONCEPTS: usize = 5;
pub const DEFAULT_CANVAS: usize = 64;
pub const DEFAULT_BACKGROUND: [u8; 3] = [200, 200, 190];

/// `a {c1} and a {c2} ...`, with `connector` between consecutive concepts.
pub fn joined_template(n: usize, connector: &str) -> Vec<CaptionPart> {
    let mut parts = Vec::new();
    for i in 0..n {
        if i > 0 {
            parts.push(CaptionPart::Word(connector.to_string()));
        }
        parts.push(CaptionPart::Word("a".into()));
        parts.push(CaptionPart::Slot(i));
    }
    parts
}

impl SceneSpec {
    pub fn new(concepts: Vec<ConceptSpec>) -> Self {
        let n = concepts.len();
        SceneSpec {
            concepts,
            canvas_size: DEFAULT_CANVAS,
            background: DEFAULT_BACKGROUND,
            layout_policy: LayoutPolicy::NonOverlapping,
            template_caption: joined_template(n, "and"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.concepts.len();
        if !(MIN_CONCEPTS..=MAX_CONCEPTS).contains(&n) {
            return Err(Error::InvalidSpec(format!("{n} concepts; need {MIN_CONCEPTS}..={MAX_CONCEPTS}")));
        }
        if self.canvas_size < 16 {
            return Err(Error::InvalidSpec(format!("canvas {} < 16", self.canvas_size)));
        }
        for (i, c) in self.concepts.iter().enumerate() {
            if self.concepts[..i].iter().any(|o| o.noun_token == c.noun_token) {
                return Err(Error::InvalidSpec(format!("noun `{}` repeated", c.noun_token)));
            }
            let (lo, hi) = c.size_range;
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(Error::InvalidSpec(format!("size range {:?} for `{}`", c.size_range, c.noun_token)));
            }
        }
        let mut filled = vec![0usize; n];
        for part in &self.template_caption {
            if let CaptionPart::Slot(i) = part {
                match filled.get_mut(*i) {
                    Some(k) => *k += 1,
                    None => return Err(Error::InvalidSpec(format!("slot {i} has no concept"))),
                }
            }
        }
        if filled.iter().any(|&k| k != 1) {
            return Err(Error::InvalidSpec("every concept must fill exactly one caption slot".into()));
        }
        Ok(())
    }

    /// Caption words with pseudo-tokens in the noun positions.
    pub fn caption(&self) -> Vec<String> {
        self.expand(|i| pseudo_token(i))
    }

    /// Caption words with the concepts' real nouns.
    pub fn caption_with_nouns(&self) -> Vec<String> {
        self.expand(|i| self.concepts[i].noun_token.clone())
    }

    fn expand(&self, noun: impl Fn(usize) -> String) -> Vec<String> {
        let mut out = Vec::new();
        for part in &self.template_caption {
            match part {
                CaptionPart::Word(w) => out.push(w.clone()),
                CaptionPart::Slot(i) => {
                    out.push(self.concepts[*i].adjective_token.clone());
                    out.push(noun(*i));
                }
            }
        }
        out
    }
}

/// Caption words of a concept as they appear in a scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptLabel {
    pub noun: String,
    pub adjective: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionedScene {
    pub scene_id: String,
    pub seed: u64,
    pub image: RgbImage,
    /// Caption words, pseudo-tokens in the noun slots.
    pub caption: Vec<String>,
    pub concepts: Vec<ConceptLabel>,
    /// One mask per concept, same order as `concepts`.
    pub masks: Vec<Mask>,
}

impl CaptionedScene {
    pub fn flip_horizontal(&self) -> Self {
        CaptionedScene {
            image: self.image.flip_horizontal(),
            masks: self.masks.iter().map(Mask::flip_horizontal).collect(),
            ..self.clone()
        }
    }

    /// Caption with each pseudo-token replaced by its concept's noun.
    pub fn caption_with_nouns(&self) -> Vec<String> {
        self.caption
            .iter()
            .map(|w| self.concepts.iter().find(|c| &c.token == w).map(|c| c.noun.clone()).unwrap_or_else(|| w.clone()))
            .collect()
    }

    pub fn mask_for_token(&self, token: &str) -> Option<&Mask> {
        self.concepts.iter().position(|c| c.token == token).map(|i| &self.masks[i])
    }

    pub fn foreground(&self) -> Mask {
        let mut out = Mask::zeros(self.image.width, self.image.height);
        for m in &self.masks {
            for (o, &v) in out.data.iter_mut().zip(&m.data) {
                *o |= v;
            }
        }
        out
    }
}
