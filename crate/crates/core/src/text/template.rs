use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lexicon::Lexicon;

/// Draws one neutral template uniformly from the pool.
pub fn sample_neutral_template_with<R: Rng + ?Sized>(lex: &Lexicon, rng: &mut R) -> Vec<String> {
    let i = rng.random_range(0..lex.neutral_templates.len());
    lex.neutral_templates[i].split_whitespace().map(|w| w.to_lowercase()).collect()
}

pub fn sample_neutral_template(lex: &Lexicon, seed: u64) -> Vec<String> {
    sample_neutral_template_with(lex, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn fixed_seed_fixed_template() {
        let lex = Lexicon::default();
        assert_eq!(sample_neutral_template(&lex, 11), sample_neutral_template(&lex, 11));
        assert!(lex.neutral_templates.contains(&sample_neutral_template(&lex, 3).join(" ")));
    }

    // Coupon collector: P(miss some template in 200 draws) <= 8 * (7/8)^200 ~ 2e-11.
    #[test]
    fn streams_cover_pool_within_200_draws() {
        let lex = Lexicon::default();
        let bound = 8.0 * (7.0f64 / 8.0).powi(200);
        assert!(bound < 1e-3);
        let mut misses = 0;
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seen: HashSet<_> = (0..200).map(|_| sample_neutral_template_with(&lex, &mut rng)).collect();
            if seen.len() != lex.neutral_templates.len() {
                misses += 1;
            }
        }
        assert!(misses as f64 / 1000.0 <= 1e-3);
    }
}
