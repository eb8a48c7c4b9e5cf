//! Keyed deterministic random streams.
//!
//! Every scalar score is drawn from its own generator, keyed by the market
//! seed, a role tag and the (applicant, firm) index pair. Values therefore do
//! not depend on the order in which they are requested.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamRole {
    /// `B_{a,j}`: applicant's pre-interview score of a firm.
    PreApplicant = 1,
    /// `B_{j,a}`: firm's pre-interview score of an applicant.
    PreFirm = 2,
    /// `A_{a,j}`.
    PostApplicant = 3,
    /// `A_{j,a}`.
    PostFirm = 4,
    /// Tie-break word for the applicant's view of a firm.
    JitterApplicant = 5,
    /// Tie-break word for the firm's view of an applicant.
    JitterFirm = 6,
    /// Hidden type label of an applicant (second index unused).
    ApplicantType = 7,
}

/// A ChaCha8 generator whose 256-bit seed is `seed | role | a | j`.
pub fn keyed_rng(seed: u64, role: StreamRole, a: u64, j: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(role as u64).to_le_bytes());
    key[16..24].copy_from_slice(&a.to_le_bytes());
    key[24..32].copy_from_slice(&j.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A single keyed 64-bit word, cheaper than a full generator.
pub fn keyed_u64(seed: u64, role: StreamRole, a: u64, j: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ role as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ j.rotate_left(32))
}

/// Stable mix of a list of words, used for seed derivation.
pub fn mix_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6A09_E667_F3BC_C909u64, |h, &w| splitmix64(h ^ splitmix64(w)))
}
