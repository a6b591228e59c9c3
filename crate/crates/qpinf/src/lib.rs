//! Exact computations on the rational projective space QP^inf and related
//! countable spaces: basic opens, skeleta, clopen cells and a back-and-forth
//! engine that builds homeomorphisms between countable pieces.

pub mod cli;
pub mod engine;
pub mod gamma;
pub mod golomb;
pub mod homogeneity;
pub mod ladder;
pub mod meet;
pub mod presentation;
pub mod projective;
pub mod qline;
pub mod quad;
pub mod rat;
pub mod reskeleton;
pub mod singular;
pub mod skeleton;

/// Seeded generator used by every sampled check.
pub type Rng = rand_chacha::ChaCha8Rng;
