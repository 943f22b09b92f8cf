//! Semi-supervised building-function mapping.
//!
//! The crate chains multi-modal raster fusion ([`cube`]), weak labels from
//! vector data ([`labelgen`]), a two-branch high-resolution segmentation
//! network trained with a masked cross-entropy ([`nn`], [`pipeline`]) and the
//! evaluation suite ([`eval`]). [`synth`] generates cities with known ground
//! truth so the whole chain can be checked end to end.

pub mod cli;
pub mod cube;
pub mod eval;
pub mod error;
pub mod fsio;
pub mod geo;
pub mod labelgen;
pub mod nn;
pub mod pipeline;
pub mod render;
pub mod synth;

pub use error::{Error, Result};

/// Mixes a base seed with a stream path into an independent seed
/// (splitmix64 finalizer applied per component).
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    stream.iter().fold(mix(base), |acc, &s| mix(acc ^ mix(s)))
}
