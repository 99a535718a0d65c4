//! Population-division mechanisms: each participating user reports with the
//! full budget, and the window guarantee is met by letting every user
//! participate at most once in any `w` consecutive steps.
//!
//! [`Lpu`] rotates fixed groups. [`Lpd`] and [`Lpa`] sample cohorts from a
//! [`UserPool`] that locks users for `w` steps after use, spending a probe
//! cohort of `floor(n / 2w)` users per step on change detection and
//! managing the publication half of the population adaptively, mirroring
//! the budget-division pair one dimension over.

use alloc::collections::VecDeque;
use alloc::string::ToString;
use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adaptive::{choose_strategy, estimate_dissimilarity, publication_error};
use crate::error::Error;
use crate::freq::{avg_variance, grr_estimate, perturb_unchecked, GrrParams, Histogram};
use crate::stream::{
    Mechanism, MechanismConfig, Spend, StepGuard, StepOutcome, Strategy, StreamSnapshot,
    UserIndex, ValueIndex,
};

/// Sampling pool that enforces once-per-window participation.
///
/// A cohort sampled at step `t` stays checked out through step `t + w - 1`
/// and returns to the pool for step `t + w`; callers recycle at the END of
/// each step. Every window of `w` consecutive steps therefore sees each
/// user at most once.
#[derive(Clone, Debug)]
pub struct UserPool {
    w: u64,
    available: Vec<UserIndex>,
    /// Cohorts in sampling order with the step they were drawn at.
    in_use: VecDeque<(Vec<UserIndex>, u64)>,
}

impl UserPool {
    pub fn new(n: u64, w: u64) -> Self {
        Self {
            w,
            available: (0..n as UserIndex).collect(),
            in_use: VecDeque::new(),
        }
    }

    /// Users currently drawable.
    pub fn available(&self) -> u64 {
        self.available.len() as u64
    }

    /// Users locked by a recent cohort.
    pub fn in_use(&self) -> u64 {
        self.in_use.iter().map(|(c, _)| c.len() as u64).sum()
    }

    /// Draws `k` distinct users uniformly at step `t`. Exhaustion is a hard
    /// error: the mechanisms size their requests so it cannot happen.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        k: u64,
        t: u64,
        rng: &mut R,
    ) -> Result<Vec<UserIndex>, Error> {
        let k = k as usize;
        if k == 0 {
            return Ok(Vec::new());
        }
        let len = self.available.len();
        if len < k {
            return Err(Error::PoolExhausted { need: k as u64, available: len as u64 });
        }
        // Partial Fisher-Yates into the tail, then detach the tail.
        for i in 0..k {
            let j = rng.random_range(0..len - i);
            self.available.swap(j, len - 1 - i);
        }
        let cohort = self.available.split_off(len - k);
        self.in_use.push_back((cohort.clone(), t));
        Ok(cohort)
    }

    /// Releases cohorts whose window has passed; call at the end of step
    /// `t`. A cohort drawn at `s` is released once `s + w <= t + 1`, making
    /// it available again exactly at step `s + w`.
    pub fn recycle(&mut self, t: u64) {
        while let Some((_, s)) = self.in_use.front() {
            if s + self.w <= t + 1 {
                let (cohort, _) = self.in_use.pop_front().expect("front checked");
                self.available.extend(cohort);
            } else {
                break;
            }
        }
    }
}

/// Rolling record of per-step publication cohort sizes, the population
/// analog of the budget ledger: before step `t` it reports the users spent
/// on publications over steps `t-w+1 ..= t-1`.
#[derive(Clone, Debug)]
pub struct PopulationWindowLedger {
    capacity: usize,
    recent: VecDeque<u64>,
}

impl PopulationWindowLedger {
    pub fn new(w: u64) -> Self {
        let capacity = (w.saturating_sub(1)) as usize;
        Self { capacity, recent: VecDeque::with_capacity(capacity + 1) }
    }

    /// Publication users over the last `w - 1` recorded steps.
    pub fn recent_sum(&self) -> u64 {
        self.recent.iter().sum()
    }

    /// Records this step's publication cohort size (0 for approximations).
    pub fn record(&mut self, count: u64) {
        self.recent.push_back(count);
        if self.recent.len() > self.capacity {
            self.recent.pop_front();
        }
    }
}

/// Perturbs the values of one cohort and tallies the reports.
fn cohort_tally<R: Rng + ?Sized>(
    values: &[ValueIndex],
    cohort: &[UserIndex],
    params: &GrrParams,
    rng: &mut R,
) -> Result<Vec<u64>, Error> {
    let mut counts = alloc::vec![0u64; params.d];
    for &u in cohort {
        let v = values[u as usize] as usize;
        if v >= params.d {
            return Err(Error::IndexOutOfRange { index: v, d: params.d });
        }
        counts[perturb_unchecked(v, params, rng)] += 1;
    }
    Ok(counts)
}

/// Uniform population split: `w` fixed contiguous groups take turns, each
/// reporting with the full budget once per window. Deterministic rotation,
/// no sampling randomness.
pub struct Lpu {
    guard: StepGuard,
    params: GrrParams,
    epsilon: f64,
    w: u64,
    groups: Vec<Vec<UserIndex>>,
    rng: ChaCha8Rng,
}

impl Lpu {
    pub fn new(config: MechanismConfig) -> Result<Self, Error> {
        config.validate()?;
        if config.n < config.w {
            return Err(Error::InvalidConfig(
                "population smaller than window: a rotation group would be empty".to_string(),
            ));
        }
        let base = config.n / config.w;
        let extra = (config.n % config.w) as usize;
        let mut groups = Vec::with_capacity(config.w as usize);
        let mut next: UserIndex = 0;
        for g in 0..config.w as usize {
            let size = base + u64::from(g < extra);
            let group: Vec<UserIndex> = (next..next + size as UserIndex).collect();
            next += size as UserIndex;
            groups.push(group);
        }
        Ok(Self {
            guard: StepGuard::new(config.n),
            params: GrrParams::new(config.epsilon, config.d)?,
            epsilon: config.epsilon,
            w: config.w,
            groups,
            rng: config.rng(),
        })
    }
}

impl Mechanism for Lpu {
    fn step(&mut self, snapshot: &StreamSnapshot<'_>) -> Result<StepOutcome, Error> {
        self.guard.admit(snapshot)?;
        let group = &self.groups[((snapshot.t - 1) % self.w) as usize];
        let counts = cohort_tally(snapshot.values, group, &self.params, &mut self.rng)?;
        let release = grr_estimate(&counts, group.len() as u64, &self.params)?;
        Ok(StepOutcome {
            release,
            strategy: Strategy::Publish,
            comm_events: group.len() as u64,
            budget_spent: alloc::vec![Spend::Cohort {
                users: group.clone(),
                eps: self.epsilon,
            }],
        })
    }
}

/// Shared sizing for the adaptive population pair.
fn probe_cohort_size(config: &MechanismConfig) -> Result<u64, Error> {
    let k1 = config.n / (2 * config.w);
    if k1 == 0 {
        return Err(Error::InvalidConfig(
            "population must be at least twice the window for per-step probe cohorts".to_string(),
        ));
    }
    Ok(k1)
}

/// Adaptive population division.
///
/// Per step a probe cohort of `floor(n / 2w)` users reports with the full
/// budget. The candidate publication cohort is half of what remains of the
/// publication half of the population in the current window:
/// `floor((n - 2 S) / 4)` where `S` is the ledger sum, clamped at zero.
/// Publish only when the cohort reaches `u_min` users and the estimated gap
/// strictly exceeds the publication error.
pub struct Lpd {
    guard: StepGuard,
    d: usize,
    n: u64,
    u_min: u64,
    epsilon: f64,
    params: GrrParams,
    k1: u64,
    var1: f64,
    prev: Histogram,
    pool: UserPool,
    ledger: PopulationWindowLedger,
    rng: ChaCha8Rng,
}

impl Lpd {
    pub fn new(config: MechanismConfig) -> Result<Self, Error> {
        config.validate()?;
        let k1 = probe_cohort_size(&config)?;
        Ok(Self {
            guard: StepGuard::new(config.n),
            d: config.d,
            n: config.n,
            u_min: config.u_min,
            epsilon: config.epsilon,
            params: GrrParams::new(config.epsilon, config.d)?,
            k1,
            var1: avg_variance(config.epsilon, k1, config.d)?,
            prev: Histogram::zeros(config.d),
            pool: UserPool::new(config.n, config.w),
            ledger: PopulationWindowLedger::new(config.w),
            rng: config.rng(),
        })
    }
}

impl Mechanism for Lpd {
    fn step(&mut self, snapshot: &StreamSnapshot<'_>) -> Result<StepOutcome, Error> {
        self.guard.admit(snapshot)?;
        let probe_cohort = self.pool.sample(self.k1, snapshot.t, &mut self.rng)?;
        let counts = cohort_tally(snapshot.values, &probe_cohort, &self.params, &mut self.rng)?;
        let probe = grr_estimate(&counts, self.k1, &self.params)?;
        let dis = estimate_dissimilarity(&probe, &self.prev, self.var1)?;

        let spent = self.ledger.recent_sum();
        let n_pp = ((self.n as i64 - 2 * spent as i64) / 4).max(0) as u64;
        let err = publication_error(self.epsilon, n_pp, self.d)?;
        let publish =
            n_pp >= self.u_min && choose_strategy(dis, err) == Strategy::Publish;

        let outcome = if publish {
            let pub_cohort = self.pool.sample(n_pp, snapshot.t, &mut self.rng)?;
            let counts2 =
                cohort_tally(snapshot.values, &pub_cohort, &self.params, &mut self.rng)?;
            let release = grr_estimate(&counts2, n_pp, &self.params)?;
            self.prev = release.clone();
            self.ledger.record(n_pp);
            StepOutcome {
                release,
                strategy: Strategy::Publish,
                comm_events: self.k1 + n_pp,
                budget_spent: alloc::vec![
                    Spend::Cohort { users: probe_cohort, eps: self.epsilon },
                    Spend::Cohort { users: pub_cohort, eps: self.epsilon },
                ],
            }
        } else {
            self.ledger.record(0);
            StepOutcome {
                release: self.prev.clone(),
                strategy: Strategy::Approximate,
                comm_events: self.k1,
                budget_spent: alloc::vec![Spend::Cohort {
                    users: probe_cohort,
                    eps: self.epsilon,
                }],
            }
        };
        self.pool.recycle(snapshot.t);
        Ok(outcome)
    }
}

/// Adaptive population absorption.
///
/// Publication cohorts are integer multiples of the probe size `k1`. A
/// publication that used `k` units nullifies the next `k - 1` steps, after
/// which idle steps are absorbed one unit each, capped at `w`; the same
/// integer arithmetic as the budget absorber, counted in users.
pub struct Lpa {
    guard: StepGuard,
    d: usize,
    w: u64,
    epsilon: f64,
    params: GrrParams,
    k1: u64,
    var1: f64,
    prev: Histogram,
    pool: UserPool,
    /// Step of the last publication; 0 before the first.
    last_pub: u64,
    /// Units the last publication used; 0 before the first.
    last_units: u64,
    rng: ChaCha8Rng,
}

impl Lpa {
    pub fn new(config: MechanismConfig) -> Result<Self, Error> {
        config.validate()?;
        let k1 = probe_cohort_size(&config)?;
        Ok(Self {
            guard: StepGuard::new(config.n),
            d: config.d,
            w: config.w,
            epsilon: config.epsilon,
            params: GrrParams::new(config.epsilon, config.d)?,
            k1,
            var1: avg_variance(config.epsilon, k1, config.d)?,
            prev: Histogram::zeros(config.d),
            pool: UserPool::new(config.n, config.w),
            last_pub: 0,
            last_units: 0,
            rng: config.rng(),
        })
    }

    fn approximate(&self, probe_cohort: Vec<UserIndex>) -> StepOutcome {
        StepOutcome {
            release: self.prev.clone(),
            strategy: Strategy::Approximate,
            comm_events: self.k1,
            budget_spent: alloc::vec![Spend::Cohort {
                users: probe_cohort,
                eps: self.epsilon,
            }],
        }
    }
}

impl Mechanism for Lpa {
    fn step(&mut self, snapshot: &StreamSnapshot<'_>) -> Result<StepOutcome, Error> {
        self.guard.admit(snapshot)?;
        let probe_cohort = self.pool.sample(self.k1, snapshot.t, &mut self.rng)?;
        let counts = cohort_tally(snapshot.values, &probe_cohort, &self.params, &mut self.rng)?;
        let probe = grr_estimate(&counts, self.k1, &self.params)?;
        let dis = estimate_dissimilarity(&probe, &self.prev, self.var1)?;

        let nullified = self.last_units.saturating_sub(1);
        let since = snapshot.t - self.last_pub;
        let outcome = if since <= nullified {
            self.approximate(probe_cohort)
        } else {
            let units = (since - nullified).min(self.w);
            let n_pp = units * self.k1;
            let err = publication_error(self.epsilon, n_pp, self.d)?;
            match choose_strategy(dis, err) {
                Strategy::Publish => {
                    let pub_cohort = self.pool.sample(n_pp, snapshot.t, &mut self.rng)?;
                    let counts2 =
                        cohort_tally(snapshot.values, &pub_cohort, &self.params, &mut self.rng)?;
                    let release = grr_estimate(&counts2, n_pp, &self.params)?;
                    self.prev = release.clone();
                    self.last_pub = snapshot.t;
                    self.last_units = units;
                    StepOutcome {
                        release,
                        strategy: Strategy::Publish,
                        comm_events: self.k1 + n_pp,
                        budget_spent: alloc::vec![
                            Spend::Cohort { users: probe_cohort, eps: self.epsilon },
                            Spend::Cohort { users: pub_cohort, eps: self.epsilon },
                        ],
                    }
                }
                Strategy::Approximate => self.approximate(probe_cohort),
            }
        };
        self.pool.recycle(snapshot.t);
        Ok(outcome)
    }
}
