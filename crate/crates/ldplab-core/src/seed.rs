//! Seed splitting.
//!
//! Every run is driven by a single 64-bit seed. Independent random streams
//! (dataset synthesis, mechanism noise, ...) are derived from it with
//! [`sub_seed`] so that replaying a run never shares generator state between
//! streams and parallel runs stay decorrelated.

/// Stream id: dataset synthesis for a run.
pub const STREAM_DATASET: u64 = 1;
/// Stream id: mechanism randomness (perturbation and cohort sampling).
pub const STREAM_MECHANISM: u64 = 2;
/// Stream id: the probability walk inside a generator.
pub const STREAM_GEN_SEQUENCE: u64 = 3;
/// Stream id: the per-timestamp user selection inside a generator.
pub const STREAM_GEN_PICK: u64 = 4;

/// SplitMix64 finalizer; full-period bijective mixing on u64.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of a named sub-stream from a run seed.
///
/// The splitting rule is `splitmix64(splitmix64(stream) ^ seed)`: the stream
/// id is mixed first so that small consecutive ids land far apart, then the
/// result is mixed with the run seed. Distinct `(seed, stream)` pairs give
/// decorrelated generators; identical pairs always give the same one.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(stream) ^ seed)
}
