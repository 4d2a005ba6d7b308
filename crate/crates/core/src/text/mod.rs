//! Closed-vocabulary text front end: lexicon, caption parsing, learnable
//! selection and the embedding table that acts as the frozen text encoder.

mod lexicon;
mod parse;
mod selection;
mod table;
mod template;
mod vocab;

pub use lexicon::{is_pseudo_token, pseudo_token, Lexicon, CLASS_NOUN, MAX_PSEUDO_TOKENS};
pub use parse::{parse_caption, CaptionParse, Role};
pub use selection::{select_learnable, LearnSelection, Strategy};
pub use table::{EmbeddingTable, InitMode, Slot};
pub use template::{sample_neutral_template, sample_neutral_template_with};
pub use vocab::{TokenId, Vocabulary};
