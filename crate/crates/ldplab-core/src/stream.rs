//! Stream shapes and the mechanism contract.
//!
//! Time is discrete and 1-based. At every step each of `n` users holds one
//! value from a size-`d` domain; a mechanism consumes one [`StreamSnapshot`]
//! per step and emits one [`StepOutcome`]. The `w`-event guarantee means the
//! budget any single user spends inside any window of `w` consecutive steps
//! must stay within the total budget `epsilon`; [`Spend`] records are the
//! evidence the audits check that claim against.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::freq::{check_epsilon, Histogram};

/// Value as an index into the domain; domains stay far below 65k.
pub type ValueIndex = u16;
/// User as an index into the population.
pub type UserIndex = u32;

/// One user's full trajectory, used by file-backed datasets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserStream {
    pub user_id: String,
    /// `values[t-1]` is the value held at step `t`.
    pub values: Vec<ValueIndex>,
}

/// One step of the population, borrowed from the dataset's storage.
///
/// `values[u]` is user `u`'s value at step `t`; mechanisms never see user
/// identifiers, only positions.
#[derive(Clone, Copy, Debug)]
pub struct StreamSnapshot<'a> {
    /// 1-based step index.
    pub t: u64,
    pub values: &'a [ValueIndex],
}

/// What the mechanism did at one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Fresh estimate released from new reports.
    Publish,
    /// Previous release re-emitted.
    Approximate,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Publish => "publish",
            Strategy::Approximate => "approximate",
        }
    }
}

/// Per-step budget expenditure, the raw material of the privacy audits.
///
/// `eps` may be 0 (a nullified collection still contacts its users, which
/// counts as an upload for communication and participation accounting).
#[derive(Clone, Debug, PartialEq)]
pub enum Spend {
    /// Every user in the population spent `eps`.
    AllUsers { eps: f64 },
    /// Exactly these users spent `eps`.
    Cohort { users: Vec<UserIndex>, eps: f64 },
}

impl Spend {
    /// Budget this record charges to `user`.
    pub fn spent_by(&self, user: UserIndex) -> f64 {
        match self {
            Spend::AllUsers { eps } => *eps,
            Spend::Cohort { users, eps } => {
                if users.contains(&user) {
                    *eps
                } else {
                    0.0
                }
            }
        }
    }

    /// Number of uploads this record represents given population size `n`.
    pub fn upload_count(&self, n: u64) -> u64 {
        match self {
            Spend::AllUsers { .. } => n,
            Spend::Cohort { users, .. } => users.len() as u64,
        }
    }
}

/// Everything a mechanism emits for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// The estimate released at this step (fresh or carried forward).
    pub release: Histogram,
    pub strategy: Strategy,
    /// Number of user uploads this step.
    pub comm_events: u64,
    /// Who spent what; one entry per collection round within the step.
    pub budget_spent: Vec<Spend>,
}

/// Shared mechanism parameters, validated once at construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MechanismConfig {
    /// Total budget protected over any window of `w` steps.
    pub epsilon: f64,
    /// Window length in steps.
    pub w: u64,
    /// Domain size.
    pub d: usize,
    /// Population size.
    pub n: u64,
    /// Population-division floor: fewest publication users worth spending.
    pub u_min: u64,
    /// Seed for the mechanism's own randomness.
    pub seed: u64,
}

impl MechanismConfig {
    pub fn validate(&self) -> Result<(), Error> {
        check_epsilon(self.epsilon)?;
        if self.w == 0 {
            return Err(Error::InvalidConfig("window length must be positive".to_string()));
        }
        if self.d < 2 {
            return Err(Error::InvalidConfig("domain size must be at least 2".to_string()));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("population must be nonempty".to_string()));
        }
        if self.n > u32::MAX as u64 {
            return Err(Error::InvalidConfig(
                "population exceeds the u32 user-index space".to_string(),
            ));
        }
        if self.u_min == 0 {
            return Err(Error::InvalidConfig(
                "publication-user floor must be at least 1".to_string(),
            ));
        }
        Ok(())
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Exact frequency histogram of one snapshot. Errors on out-of-domain values.
pub fn true_histogram(values: &[ValueIndex], d: usize) -> Result<Histogram, Error> {
    if values.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let mut counts = alloc::vec![0u64; d];
    for &v in values {
        let v = v as usize;
        if v >= d {
            return Err(Error::IndexOutOfRange { index: v, d });
        }
        counts[v] += 1;
    }
    let n = values.len() as f64;
    Ok(Histogram(counts.into_iter().map(|c| c as f64 / n).collect()))
}

/// A streaming release mechanism. Steps must arrive as consecutive `t`
/// starting from 1; [`StepGuard`] enforces that for implementations.
pub trait Mechanism {
    /// Consumes one step and returns the release decision for it.
    fn step(&mut self, snapshot: &StreamSnapshot<'_>) -> Result<StepOutcome, Error>;
}

/// Enforces the step protocol: consecutive `t` from 1, constant population.
#[derive(Clone, Debug)]
pub(crate) struct StepGuard {
    next_t: u64,
    n: u64,
}

impl StepGuard {
    pub(crate) fn new(n: u64) -> Self {
        Self { next_t: 1, n }
    }

    pub(crate) fn admit(&mut self, snapshot: &StreamSnapshot<'_>) -> Result<(), Error> {
        if snapshot.t != self.next_t {
            return Err(Error::OutOfOrderTimestamp { expected: self.next_t, got: snapshot.t });
        }
        if snapshot.values.len() as u64 != self.n {
            return Err(Error::PopulationMismatch {
                expected: self.n,
                got: snapshot.values.len() as u64,
            });
        }
        self.next_t += 1;
        Ok(())
    }
}

/// The seven release mechanisms.
///
/// `Lbu`/`Lsp` split the budget uniformly or over samples; `Lbd`/`Lba`
/// divide budget adaptively; `Lpu`/`Lpd`/`Lpa` divide the population
/// instead, giving each participant the full budget less often.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MechanismKind {
    Lbu,
    Lsp,
    Lbd,
    Lba,
    Lpu,
    Lpd,
    Lpa,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 7] = [
        MechanismKind::Lbu,
        MechanismKind::Lsp,
        MechanismKind::Lbd,
        MechanismKind::Lba,
        MechanismKind::Lpu,
        MechanismKind::Lpd,
        MechanismKind::Lpa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MechanismKind::Lbu => "lbu",
            MechanismKind::Lsp => "lsp",
            MechanismKind::Lbd => "lbd",
            MechanismKind::Lba => "lba",
            MechanismKind::Lpu => "lpu",
            MechanismKind::Lpd => "lpd",
            MechanismKind::Lpa => "lpa",
        }
    }

    /// Whether the mechanism leaves sampled-out users silent, making the
    /// once-per-window participation audit meaningful. Budget-division
    /// mechanisms contact everyone every step by design.
    pub fn samples_users(self) -> bool {
        matches!(
            self,
            MechanismKind::Lsp | MechanismKind::Lpu | MechanismKind::Lpd | MechanismKind::Lpa
        )
    }
}

impl core::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lbu" => Ok(MechanismKind::Lbu),
            "lsp" => Ok(MechanismKind::Lsp),
            "lbd" => Ok(MechanismKind::Lbd),
            "lba" => Ok(MechanismKind::Lba),
            "lpu" => Ok(MechanismKind::Lpu),
            "lpd" => Ok(MechanismKind::Lpd),
            "lpa" => Ok(MechanismKind::Lpa),
            other => Err(Error::InvalidConfig(alloc::format!("unknown mechanism '{other}'"))),
        }
    }
}

/// Builds a boxed mechanism of the requested kind.
pub fn build_mechanism(
    kind: MechanismKind,
    config: MechanismConfig,
) -> Result<alloc::boxed::Box<dyn Mechanism>, Error> {
    use crate::budget::{Lba, Lbd, Lbu, Lsp};
    use crate::population::{Lpa, Lpd, Lpu};
    Ok(match kind {
        MechanismKind::Lbu => alloc::boxed::Box::new(Lbu::new(config)?),
        MechanismKind::Lsp => alloc::boxed::Box::new(Lsp::new(config)?),
        MechanismKind::Lbd => alloc::boxed::Box::new(Lbd::new(config)?),
        MechanismKind::Lba => alloc::boxed::Box::new(Lba::new(config)?),
        MechanismKind::Lpu => alloc::boxed::Box::new(Lpu::new(config)?),
        MechanismKind::Lpd => alloc::boxed::Box::new(Lpd::new(config)?),
        MechanismKind::Lpa => alloc::boxed::Box::new(Lpa::new(config)?),
    })
}
