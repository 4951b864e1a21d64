//! Expansion of grouped Fitzpatrick classes into single types.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{FitzpatrickLabel, ManifestRow};
use crate::ordinal::Fitzpatrick;

/// Replaces each grouped label (I–II, III–IV, V–VI) with a uniformly random
/// member of the group. Single labels and missing labels pass through.
pub fn expand_grouped_labels(rows: &[ManifestRow], seed: u64) -> Vec<ManifestRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.iter()
        .map(|row| {
            let mut out = row.clone();
            if let Some(label) = row.fitzpatrick {
                out.fitzpatrick = Some(FitzpatrickLabel::Single(expand_label(label, &mut rng)));
            }
            out
        })
        .collect()
}

/// Draws one member of a grouped label; a single label is returned as is
/// without consuming randomness.
pub fn expand_label<R: Rng + ?Sized>(label: FitzpatrickLabel, rng: &mut R) -> Fitzpatrick {
    match label {
        FitzpatrickLabel::Single(f) => f,
        FitzpatrickLabel::Grouped(lo, hi) => {
            Fitzpatrick::new(rng.gen_range(lo..=hi)).expect("group bounds are valid ranks")
        }
    }
}

/// Parses a label token and expands it; unknown tokens are an error.
pub fn expand_token<R: Rng + ?Sized>(token: &str, rng: &mut R) -> Result<Fitzpatrick, String> {
    token.parse::<FitzpatrickLabel>().map(|l| expand_label(l, rng))
}
