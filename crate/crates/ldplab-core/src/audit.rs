//! After-the-fact privacy audits over the spend records a run produced.
//!
//! Two independent checks, both exact over every user and every window of
//! `w` consecutive steps:
//!
//! * window budget: no user's spends inside a window sum above `epsilon`
//!   (plus [`BUDGET_TOLERANCE`] for float accumulation);
//! * once per window: no user uploads at two steps closer than `w` apart,
//!   the discipline the sampling mechanisms promise (budget-division
//!   mechanisms contact everyone every step by design, so this check only
//!   means something for the samplers).
//!
//! A failed audit is a result, not an error: the outcome carries the first
//! offending `(window_end, user)` pair, ordered by window end then user.

use alloc::vec::Vec;

use crate::error::Error;
use crate::stream::{Spend, UserIndex};

/// Slack added to the budget cap before calling a window sum a violation;
/// absorbs float accumulation across a window, nothing more.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// The first offending window of a failed audit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub user: UserIndex,
    /// Last step of the offending window `[window_end - w + 1, window_end]`.
    pub window_end: u64,
    /// Budget sum for the budget audit; participation count for the
    /// once-per-window audit.
    pub observed: f64,
    pub limit: f64,
}

/// Outcome of one audit over one run. Data, not an error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AuditOutcome {
    Pass,
    Fail(Violation),
}

impl AuditOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, AuditOutcome::Pass)
    }
}

/// Keeps the candidate with the smaller (window_end, user); on an exact
/// tie, the larger observed value (the more complete account of the same
/// window).
fn merge(best: Option<Violation>, candidate: Violation) -> Option<Violation> {
    match best {
        None => Some(candidate),
        Some(b) => {
            let replace = (candidate.window_end, candidate.user) < (b.window_end, b.user)
                || ((candidate.window_end, candidate.user) == (b.window_end, b.user)
                    && candidate.observed > b.observed);
            Some(if replace { candidate } else { b })
        }
    }
}

fn check_shape(steps: &[Vec<Spend>], n: u64, w: u64) -> Result<(), Error> {
    if w == 0 {
        return Err(Error::InvalidConfig(alloc::string::String::from(
            "window length must be positive",
        )));
    }
    if n == 0 {
        return Err(Error::InvalidConfig(alloc::string::String::from(
            "population must be nonempty",
        )));
    }
    for spends in steps {
        for spend in spends {
            if let Spend::Cohort { users, .. } = spend {
                for &u in users {
                    if u as u64 >= n {
                        return Err(Error::IndexOutOfRange { index: u as usize, d: n as usize });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Per-user cohort events in step order: `events[u]` lists `(t, eps)`.
fn cohort_events(steps: &[Vec<Spend>], n: u64) -> Vec<Vec<(u64, f64)>> {
    let mut events: Vec<Vec<(u64, f64)>> = alloc::vec![Vec::new(); n as usize];
    for (i, spends) in steps.iter().enumerate() {
        let t = i as u64 + 1;
        for spend in spends {
            if let Spend::Cohort { users, eps } = spend {
                for &u in users {
                    events[u as usize].push((t, *eps));
                }
            }
        }
    }
    events
}

/// Checks that every user's budget inside every window of `w` steps sums
/// to at most `epsilon + BUDGET_TOLERANCE`. Exact over all users and
/// windows; returns the first offending window by (window_end, user).
pub fn audit_window_budget(
    steps: &[Vec<Spend>],
    n: u64,
    w: u64,
    epsilon: f64,
) -> Result<AuditOutcome, Error> {
    check_shape(steps, n, w)?;
    if !epsilon.is_finite() {
        return Err(Error::InvalidBudget(epsilon));
    }
    let t_len = steps.len();
    let limit = epsilon + BUDGET_TOLERANCE;

    // Per-step budget every user pays regardless of cohorts.
    let uniform: Vec<f64> = steps
        .iter()
        .map(|spends| {
            spends
                .iter()
                .map(|s| match s {
                    Spend::AllUsers { eps } => *eps,
                    Spend::Cohort { .. } => 0.0,
                })
                .sum()
        })
        .collect();
    let any_uniform = uniform.iter().any(|&u| u > 0.0);

    // Every user pays the uniform series, so one sliding scan covers all
    // cohort-free windows; user 0 stands in for everyone.
    let mut best: Option<Violation> = None;
    let mut rolling = 0.0;
    for e in 1..=t_len {
        rolling += uniform[e - 1];
        if e > w as usize {
            rolling -= uniform[e - 1 - w as usize];
        }
        if rolling > limit {
            best = merge(
                best,
                Violation { user: 0, window_end: e as u64, observed: rolling, limit: epsilon },
            );
            break;
        }
    }

    // Prefix sums make the uniform part of any window O(1).
    let mut prefix = alloc::vec![0.0; t_len + 1];
    for e in 1..=t_len {
        prefix[e] = prefix[e - 1] + uniform[e - 1];
    }
    let window_uniform = |e: usize| -> f64 {
        let lo = e.saturating_sub(w as usize);
        prefix[e] - prefix[lo]
    };

    for (u, events) in cohort_events(steps, n).into_iter().enumerate() {
        if events.is_empty() {
            continue;
        }
        // Candidate window ends: where this user's cohort spends can
        // contribute. Without a uniform series the cohort sum only peaks
        // when an event enters, so entries suffice; with one, every end in
        // the events' reach must be checked.
        let mut lo = 0usize;
        let mut hi = 0usize;
        let mut cohort_sum = 0.0;
        let scan = |e: u64,
                        lo: &mut usize,
                        hi: &mut usize,
                        cohort_sum: &mut f64|
         -> Option<Violation> {
            while *hi < events.len() && events[*hi].0 <= e {
                *cohort_sum += events[*hi].1;
                *hi += 1;
            }
            while *lo < *hi && events[*lo].0 + w <= e {
                *cohort_sum -= events[*lo].1;
                *lo += 1;
            }
            let total =
                *cohort_sum + if any_uniform { window_uniform(e as usize) } else { 0.0 };
            (total > limit).then_some(Violation {
                user: u as UserIndex,
                window_end: e,
                observed: total,
                limit: epsilon,
            })
        };
        if any_uniform {
            let mut next_e = 0u64;
            'ranges: for &(t, _) in &events {
                let start = t.max(next_e + 1);
                let end = (t + w - 1).min(t_len as u64);
                for e in start..=end {
                    if let Some(v) = scan(e, &mut lo, &mut hi, &mut cohort_sum) {
                        best = merge(best, v);
                        break 'ranges;
                    }
                }
                next_e = next_e.max(end);
            }
        } else {
            for j in 0..events.len() {
                let e = events[j].0;
                if e == events.get(j + 1).map_or(0, |x| x.0) {
                    continue; // same step; the last entry at this t covers it
                }
                if let Some(v) = scan(e, &mut lo, &mut hi, &mut cohort_sum) {
                    best = merge(best, v);
                    break;
                }
            }
        }
    }

    Ok(match best {
        None => AuditOutcome::Pass,
        Some(v) => AuditOutcome::Fail(v),
    })
}

/// Checks that no user uploads at two distinct steps closer than `w`
/// apart. Multiple uploads within one step count as one participation (one
/// contact). Meaningful for the sampling mechanisms; budget-division
/// mechanisms fail it by design and are not audited with it.
pub fn audit_once_per_window(
    steps: &[Vec<Spend>],
    n: u64,
    w: u64,
) -> Result<AuditOutcome, Error> {
    check_shape(steps, n, w)?;

    // Steps where every user participates.
    let all_times: Vec<u64> = steps
        .iter()
        .enumerate()
        .filter(|(_, spends)| spends.iter().any(|s| matches!(s, Spend::AllUsers { .. })))
        .map(|(i, _)| i as u64 + 1)
        .collect();

    let mut best: Option<Violation> = None;
    for pair in all_times.windows(2) {
        if pair[1] - pair[0] < w {
            best = merge(
                best,
                Violation { user: 0, window_end: pair[1], observed: 2.0, limit: 1.0 },
            );
            break;
        }
    }

    for (u, events) in cohort_events(steps, n).into_iter().enumerate() {
        if events.is_empty() {
            continue;
        }
        // Merge this user's cohort steps with the all-user steps, deduped.
        let mut times: Vec<u64> = Vec::with_capacity(events.len() + all_times.len());
        let mut ai = 0usize;
        for &(t, _) in &events {
            while ai < all_times.len() && all_times[ai] <= t {
                times.push(all_times[ai]);
                ai += 1;
            }
            times.push(t);
        }
        times.extend_from_slice(&all_times[ai..]);
        times.dedup();
        for pair in times.windows(2) {
            if pair[1] - pair[0] < w {
                best = merge(
                    best,
                    Violation {
                        user: u as UserIndex,
                        window_end: pair[1],
                        observed: 2.0,
                        limit: 1.0,
                    },
                );
                break;
            }
        }
    }

    Ok(match best {
        None => AuditOutcome::Pass,
        Some(v) => AuditOutcome::Fail(v),
    })
}
