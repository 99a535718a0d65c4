//! Synthetic binary stream generators.
//!
//! Each generator defines a probability path `p_t` over 1-based steps; the
//! dataset then gives exactly `round(p_t * n)` of the `n` users value 1 at
//! step `t` (the rest hold 0), with the holders re-drawn uniformly at every
//! step. Paths are clamped to `[0, 1]`; the noisy walk keeps walking from
//! the clamped value so it cannot drift out of range.

use alloc::string::ToString;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Error;
use crate::seed::{sub_seed, STREAM_GEN_PICK, STREAM_GEN_SEQUENCE};
use crate::stream::ValueIndex;

/// Default noisy-walk start.
pub const LNS_DEFAULT_P0: f64 = 0.05;
/// Default noisy-walk step standard deviation.
pub const LNS_DEFAULT_STEP_STD: f64 = 0.0025;
/// Default wave amplitude.
pub const SIN_DEFAULT_AMPLITUDE: f64 = 0.05;
/// Default wave angular frequency per step.
pub const SIN_DEFAULT_ANGULAR_FREQ: f64 = 0.01;
/// Default wave vertical offset.
pub const SIN_DEFAULT_OFFSET: f64 = 0.075;
/// Default saturation ceiling.
pub const LOG_DEFAULT_LIMIT: f64 = 0.25;
/// Default saturation growth rate.
pub const LOG_DEFAULT_GROWTH: f64 = 0.01;

/// Probability-path families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeneratorKind {
    /// Noisy walk: `p_t = clamp(p_{t-1} + N(0, step_std^2))`, `p_0` given.
    Lns { p0: f64, step_std: f64 },
    /// Wave: `p_t = amplitude * sin(angular_freq * t) + offset`.
    Sin { amplitude: f64, angular_freq: f64, offset: f64 },
    /// Saturation: `p_t = limit / (1 + e^(-growth * t))`.
    Log { limit: f64, growth: f64 },
}

impl GeneratorKind {
    pub fn default_lns() -> Self {
        GeneratorKind::Lns { p0: LNS_DEFAULT_P0, step_std: LNS_DEFAULT_STEP_STD }
    }

    pub fn default_sin() -> Self {
        GeneratorKind::Sin {
            amplitude: SIN_DEFAULT_AMPLITUDE,
            angular_freq: SIN_DEFAULT_ANGULAR_FREQ,
            offset: SIN_DEFAULT_OFFSET,
        }
    }

    pub fn default_log() -> Self {
        GeneratorKind::Log { limit: LOG_DEFAULT_LIMIT, growth: LOG_DEFAULT_GROWTH }
    }

    fn validate(&self) -> Result<(), Error> {
        let fields: &[f64] = match self {
            GeneratorKind::Lns { p0, step_std } => &[*p0, *step_std],
            GeneratorKind::Sin { amplitude, angular_freq, offset } => {
                &[*amplitude, *angular_freq, *offset]
            }
            GeneratorKind::Log { limit, growth } => &[*limit, *growth],
        };
        if fields.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidParams("generator parameters must be finite".to_string()));
        }
        if let GeneratorKind::Lns { step_std, .. } = self {
            if *step_std < 0.0 {
                return Err(Error::InvalidParams(
                    "walk step deviation must be nonnegative".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// A full dataset recipe: path family, horizon, population, seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Number of steps `T`.
    pub t_len: u64,
    /// Population size `n`.
    pub n: u64,
    pub seed: u64,
}

/// The probability path for steps `1..=t_len`. The seed only matters for
/// the noisy walk; the other families are closed-form.
pub fn probability_sequence(kind: &GeneratorKind, t_len: u64, seed: u64) -> Result<Vec<f64>, Error> {
    kind.validate()?;
    let mut seq = Vec::with_capacity(t_len as usize);
    match *kind {
        GeneratorKind::Lns { p0, step_std } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, step_std)
                .map_err(|_| Error::InvalidParams("bad walk deviation".to_string()))?;
            let mut p = p0;
            for _ in 0..t_len {
                p = (p + normal.sample(&mut rng)).clamp(0.0, 1.0);
                seq.push(p);
            }
        }
        GeneratorKind::Sin { amplitude, angular_freq, offset } => {
            for t in 1..=t_len {
                let p = amplitude * libm::sin(angular_freq * t as f64) + offset;
                seq.push(p.clamp(0.0, 1.0));
            }
        }
        GeneratorKind::Log { limit, growth } => {
            for t in 1..=t_len {
                let p = limit / (1.0 + libm::exp(-growth * t as f64));
                seq.push(p.clamp(0.0, 1.0));
            }
        }
    }
    Ok(seq)
}

/// Materializes per-step value columns: at step `t` exactly
/// `round(p_seq[t-1] * n)` users (drawn uniformly, fresh each step) hold 1.
pub fn binary_streams<R: Rng + ?Sized>(
    p_seq: &[f64],
    n: u64,
    rng: &mut R,
) -> Result<Vec<Vec<ValueIndex>>, Error> {
    if n == 0 {
        return Err(Error::InvalidParams("population must be nonempty".to_string()));
    }
    let n = n as usize;
    let mut columns = Vec::with_capacity(p_seq.len());
    let mut perm: Vec<u32> = (0..n as u32).collect();
    for &p in p_seq {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidFrequency(p));
        }
        let k = libm::round(p * n as f64) as usize;
        let mut column = alloc::vec![0 as ValueIndex; n];
        // Partial shuffle: the tail k entries of perm become the holders.
        for i in 0..k {
            let j = rng.random_range(0..n - i);
            perm.swap(j, n - 1 - i);
        }
        for &u in &perm[n - k..] {
            column[u as usize] = 1;
        }
        columns.push(column);
    }
    Ok(columns)
}

/// Generates the dataset for a recipe, deriving independent sub-seeds for
/// the path and for the per-step holder draws. Two recipes with equal
/// fields produce identical datasets.
pub fn generate(spec: &GeneratorSpec) -> Result<Vec<Vec<ValueIndex>>, Error> {
    if spec.t_len == 0 {
        return Err(Error::InvalidParams("horizon must be at least one step".to_string()));
    }
    let seq = probability_sequence(
        &spec.kind,
        spec.t_len,
        sub_seed(spec.seed, STREAM_GEN_SEQUENCE),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, STREAM_GEN_PICK));
    binary_streams(&seq, spec.n, &mut rng)
}
