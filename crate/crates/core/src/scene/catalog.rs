//! Visual meaning of the default lexicon: which shape and texture a noun
//! draws, which colour an adjective paints.

use super::spec::{ConceptSpec, ShapeKind, Texture};

pub fn noun_visual(noun: &str) -> Option<(ShapeKind, Texture)> {
    use ShapeKind::*;
    use Texture::*;
    Some(match noun {
        "ball" => (Circle, Flat),
        "bear" => (Circle, Dots),
        "melon" => (Circle, Stripes),
        "box" => (Square, Flat),
        "dice" => (Square, Dots),
        "brick" => (Square, Stripes),
        "tent" => (Triangle, Flat),
        "hat" => (Triangle, Dots),
        "kite" => (Triangle, Stripes),
        "donut" => (Ring, Flat),
        "coin" => (Ring, Dots),
        "wheel" => (Ring, Stripes),
        "flag" => (StripePatch, Flat),
        "mat" => (StripePatch, Dots),
        "towel" => (StripePatch, Stripes),
        _ => return None,
    })
}

pub fn adjective_color(adj: &str) -> Option<[u8; 3]> {
    Some(match adj {
        "red" => [220, 40, 40],
        "green" => [40, 170, 60],
        "blue" => [40, 80, 220],
        "yellow" => [235, 210, 40],
        "brown" => [140, 85, 40],
        "white" => [245, 245, 245],
        "purple" => [140, 60, 180],
        "orange" => [240, 140, 30],
        "pink" => [240, 130, 190],
        "black" => [25, 25, 25],
        _ => return None,
    })
}

/// Concrete nouns of the default lexicon (everything but the class noun).
pub const NOUNS: [&str; 15] = [
    "ball", "bear", "melon", "box", "dice", "brick", "tent", "hat", "kite", "donut", "coin", "wheel", "flag",
    "mat", "towel",
];

/// Colour adjectives of the default lexicon.
pub const COLORS: [&str; 10] = ["red", "green", "blue", "yellow", "brown", "white", "purple", "orange", "pink", "black"];

/// A concept whose look follows the catalog.
pub fn concept(adjective: &str, noun: &str, size_range: (f64, f64)) -> ConceptSpec {
    let (shape, texture) = noun_visual(noun).unwrap_or((ShapeKind::Circle, Texture::Flat));
    let color = adjective_color(adjective).unwrap_or([128, 128, 128]);
    ConceptSpec {
        noun_token: noun.to_string(),
        adjective_token: adjective.to_string(),
        shape_kind: shape,
        color,
        texture,
        size_range,
    }
}
