//! Generalized randomized response: local perturbation, unbiased frequency
//! estimation, and the variance model every release mechanism prices its
//! decisions with.
//!
//! A report over a domain of size `d` keeps the true value with probability
//! `p = e^eps / (e^eps + d - 1)` and flips to each of the `d - 1` other
//! values with probability `q = 1 / (e^eps + d - 1)`. Since `p / q = e^eps`,
//! the likelihood ratio of any output under any two inputs is bounded by
//! `e^eps`, which is the local privacy guarantee.
//!
//! The server inverts the perturbation elementwise: with `c'[k]` reports of
//! value `k` out of `n`, the unbiased frequency estimate is
//! `(c'[k]/n - q) / (p - q)`. Its per-cell variance is
//! `(d - 2 + e^eps) / (n (e^eps - 1)^2) + f_k (d - 2) / (n (e^eps - 1))`
//! where `f_k` is the true frequency, and [`avg_variance`] is the exact
//! average of that expression over all cells using `sum_k f_k = 1`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::Rng;

use crate::error::Error;
use crate::stream::ValueIndex;

/// Ordered categorical domain; index and label are a bijection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    labels: Vec<String>,
}

impl Domain {
    /// Builds a domain from distinct labels. Requires `d >= 2`.
    pub fn new(labels: Vec<String>) -> Result<Self, Error> {
        if labels.len() < 2 {
            return Err(Error::InvalidConfig(
                "domain needs at least 2 labels".to_string(),
            ));
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("domain labels must be unique".to_string()));
        }
        Ok(Self { labels })
    }

    /// The two-value domain used by the synthetic binary streams.
    pub fn binary() -> Self {
        Self { labels: alloc::vec!["0".to_string(), "1".to_string()] }
    }

    /// Domain size `d`.
    pub fn d(&self) -> usize {
        self.labels.len()
    }

    /// Labels in index order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Index of a label, if present.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Length-`d` vector of frequencies.
///
/// A TRUE histogram has entries in `[0, 1]` summing to 1; an ESTIMATED one
/// is unbiased and may leave that range. Estimates are never clipped inside
/// computations, clipping would break unbiasedness; presentation-side
/// clipping is the CLI's business.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram(pub Vec<f64>);

impl Histogram {
    /// All-zero histogram of size `d` (the conventional release before t=1).
    pub fn zeros(d: usize) -> Self {
        Self(alloc::vec![0.0; d])
    }

    /// Domain size this histogram is over.
    pub fn d(&self) -> usize {
        self.0.len()
    }

    /// Checks the TRUE-histogram invariant: entries in `[0,1]`, sum 1 within 1e-9.
    pub fn check_true(&self) -> Result<(), Error> {
        for &v in &self.0 {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidFrequency(v));
            }
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidFrequency(sum));
        }
        Ok(())
    }
}

/// Randomized-response parameters for one `(epsilon, d)` pair.
///
/// Invariants: `p = e^eps/(e^eps+d-1)`, `q = 1/(e^eps+d-1)`,
/// `p + (d-1) q = 1`, and `p > q` whenever `eps > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrrParams {
    /// Probability of reporting the true value.
    pub p: f64,
    /// Probability of reporting each specific other value.
    pub q: f64,
    /// Privacy budget in nats.
    pub epsilon: f64,
    /// Domain size.
    pub d: usize,
}

impl GrrParams {
    pub fn new(epsilon: f64, d: usize) -> Result<Self, Error> {
        check_epsilon(epsilon)?;
        if d < 2 {
            return Err(Error::InvalidConfig("domain size must be at least 2".to_string()));
        }
        let ee = libm::exp(epsilon);
        let denom = ee + d as f64 - 1.0;
        Ok(Self { p: ee / denom, q: 1.0 / denom, epsilon, d })
    }
}

/// Budgets must be positive and finite.
pub(crate) fn check_epsilon(epsilon: f64) -> Result<(), Error> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBudget(epsilon))
    }
}

/// Perturbs one value: keeps `true_index` with probability `p`, otherwise
/// reports a uniformly chosen other index. Fully determined by `rng` state.
pub fn grr_perturb<R: Rng + ?Sized>(
    true_index: usize,
    params: &GrrParams,
    rng: &mut R,
) -> Result<usize, Error> {
    if true_index >= params.d {
        return Err(Error::IndexOutOfRange { index: true_index, d: params.d });
    }
    Ok(perturb_unchecked(true_index, params, rng))
}

/// Hot-path perturbation; caller guarantees `v < d`.
#[inline]
pub(crate) fn perturb_unchecked<R: Rng + ?Sized>(v: usize, params: &GrrParams, rng: &mut R) -> usize {
    if rng.random::<f64>() < params.p {
        v
    } else {
        // Uniform over the d-1 other indices: draw in [0, d-1) and skip v.
        let j = rng.random_range(0..params.d - 1);
        j + usize::from(j >= v)
    }
}

/// Perturbs a whole cohort and tallies the reports per index.
///
/// Returns the length-`d` report counts; the number of reports equals
/// `values.len()`. Errors if any value falls outside the domain.
pub fn perturb_tally<R: Rng + ?Sized>(
    values: &[ValueIndex],
    params: &GrrParams,
    rng: &mut R,
) -> Result<Vec<u64>, Error> {
    let mut counts = alloc::vec![0u64; params.d];
    for &v in values {
        let v = v as usize;
        if v >= params.d {
            return Err(Error::IndexOutOfRange { index: v, d: params.d });
        }
        counts[perturb_unchecked(v, params, rng)] += 1;
    }
    Ok(counts)
}

/// Inverts the perturbation: unbiased frequency estimate from report counts.
///
/// Entries may be negative or exceed 1; they always sum to exactly 1 up to
/// rounding because `(1 - d q) / (p - q) = 1`.
pub fn grr_estimate(perturbed_counts: &[u64], n: u64, params: &GrrParams) -> Result<Histogram, Error> {
    if perturbed_counts.len() != params.d {
        return Err(Error::LengthMismatch { expected: params.d, got: perturbed_counts.len() });
    }
    if n == 0 {
        return Err(Error::EmptyCohort);
    }
    let sum: u64 = perturbed_counts.iter().sum();
    if sum != n {
        return Err(Error::CountMismatch { sum, n });
    }
    let nf = n as f64;
    let scale = params.p - params.q;
    let values = perturbed_counts
        .iter()
        .map(|&c| (c as f64 / nf - params.q) / scale)
        .collect();
    Ok(Histogram(values))
}

/// Per-cell estimator variance at true frequency `f_k`:
/// `(d-2+e^eps)/(n (e^eps-1)^2) + f_k (d-2)/(n (e^eps-1))`.
pub fn grr_variance(epsilon: f64, n: u64, d: usize, f_k: f64) -> Result<f64, Error> {
    check_epsilon(epsilon)?;
    if n == 0 {
        return Err(Error::EmptyCohort);
    }
    if d < 2 {
        return Err(Error::InvalidConfig("domain size must be at least 2".to_string()));
    }
    if !(0.0..=1.0).contains(&f_k) {
        return Err(Error::InvalidFrequency(f_k));
    }
    let em1 = libm::expm1(epsilon);
    let nf = n as f64;
    let df = d as f64;
    Ok((df - 2.0 + em1 + 1.0) / (nf * em1 * em1) + f_k * (df - 2.0) / (nf * em1))
}

/// The estimation variance `V(eps, n)` used by every mechanism: the exact
/// average of the per-cell variance over all `d` cells using `sum_k f_k = 1`,
/// `(d-2+e^eps)/(n (e^eps-1)^2) + (d-2)/(d n (e^eps-1))`.
///
/// Independent of the actual frequencies, which is what lets a mechanism
/// price a publication before making it.
pub fn avg_variance(epsilon: f64, n: u64, d: usize) -> Result<f64, Error> {
    check_epsilon(epsilon)?;
    if n == 0 {
        return Err(Error::EmptyCohort);
    }
    if d < 2 {
        return Err(Error::InvalidConfig("domain size must be at least 2".to_string()));
    }
    let em1 = libm::expm1(epsilon);
    let nf = n as f64;
    let df = d as f64;
    Ok((df - 2.0 + em1 + 1.0) / (nf * em1 * em1) + (df - 2.0) / (df * nf * em1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LN3: f64 = 1.0986122886681098;

    #[test]
    fn params_binary_ln3() {
        let g = GrrParams::new(LN3, 2).unwrap();
        assert_relative_eq!(g.p, 0.75, max_relative = 1e-12);
        assert_relative_eq!(g.q, 0.25, max_relative = 1e-12);
    }

    #[test]
    fn params_d5_eps1() {
        // e/(e+4) and 1/(e+4), evaluated independently at high precision.
        let g = GrrParams::new(1.0, 5).unwrap();
        assert_relative_eq!(g.p, 0.40460967519168966, max_relative = 1e-14);
        assert_relative_eq!(g.q, 0.14884758120207758, max_relative = 1e-14);
        assert_abs_diff_eq!(g.p + 4.0 * g.q, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn params_reject_bad_budget() {
        assert_eq!(GrrParams::new(0.0, 2), Err(Error::InvalidBudget(0.0)));
        assert_eq!(GrrParams::new(-1.0, 2), Err(Error::InvalidBudget(-1.0)));
        assert!(GrrParams::new(f64::NAN, 2).is_err());
        assert!(GrrParams::new(f64::INFINITY, 2).is_err());
        assert!(GrrParams::new(1.0, 1).is_err());
    }

    #[test]
    fn perturb_retention_rate_binary() {
        // d=2, eps=ln3 puts p at exactly 0.75.
        let g = GrrParams::new(LN3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 1_000_000;
        let mut kept = 0u64;
        for _ in 0..trials {
            if grr_perturb(0, &g, &mut rng).unwrap() == 0 {
                kept += 1;
            }
        }
        let frac = kept as f64 / trials as f64;
        assert!((frac - 0.75).abs() < 0.002, "retention {frac}");
    }

    #[test]
    fn perturb_is_deterministic_under_seed() {
        let g = GrrParams::new(0.7, 6).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(99);
        let mut b = ChaCha8Rng::seed_from_u64(99);
        for v in 0..6usize {
            for _ in 0..100 {
                assert_eq!(
                    grr_perturb(v, &g, &mut a).unwrap(),
                    grr_perturb(v, &g, &mut b).unwrap()
                );
            }
        }
    }

    #[test]
    fn perturb_rejects_out_of_range() {
        let g = GrrParams::new(1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            grr_perturb(3, &g, &mut rng),
            Err(Error::IndexOutOfRange { index: 3, d: 3 })
        );
    }

    #[test]
    fn estimate_zero_and_unit_points() {
        // Observed fraction exactly q maps to 0; exactly p maps to 1.
        let g = GrrParams::new(LN3, 2).unwrap();
        let est = grr_estimate(&[250, 750], 1000, &g).unwrap();
        assert_abs_diff_eq!(est.0[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.0[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn estimate_hand_example() {
        let g = GrrParams::new(LN3, 2).unwrap();
        let est = grr_estimate(&[600, 400], 1000, &g).unwrap();
        assert_abs_diff_eq!(est.0[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(est.0[1], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn estimate_rejects_bad_inputs() {
        let g = GrrParams::new(1.0, 2).unwrap();
        assert_eq!(grr_estimate(&[0, 0], 0, &g), Err(Error::EmptyCohort));
        assert_eq!(
            grr_estimate(&[1, 2], 4, &g),
            Err(Error::CountMismatch { sum: 3, n: 4 })
        );
        assert_eq!(
            grr_estimate(&[1], 1, &g),
            Err(Error::LengthMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn variance_binary_drops_frequency_term() {
        // d=2 kills the f_k term: e^eps / (n (e^eps-1)^2).
        let v0 = grr_variance(1.0, 100_000, 2, 0.0).unwrap();
        let v1 = grr_variance(1.0, 100_000, 2, 0.3).unwrap();
        assert_relative_eq!(v0, v1, max_relative = 1e-14);
        assert_relative_eq!(v0, 9.20673594208e-6, max_relative = 1e-10);
    }

    #[test]
    fn variance_hand_values() {
        assert_relative_eq!(
            grr_variance(1.0, 100_000, 5, 0.0).unwrap(),
            1.93676425622e-5,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            grr_variance(1.0, 100_000, 5, 0.4).unwrap(),
            2.63513630447e-5,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            avg_variance(1.0, 10_000, 5).unwrap(),
            2.28595028034e-4,
            max_relative = 1e-10
        );
    }

    #[test]
    fn variance_scales_inversely_with_n() {
        let v1 = grr_variance(0.8, 1000, 7, 0.2).unwrap();
        let v2 = grr_variance(0.8, 2000, 7, 0.2).unwrap();
        assert_relative_eq!(v1, 2.0 * v2, max_relative = 1e-12);
    }

    #[test]
    fn avg_variance_binary_closed_form() {
        let v = avg_variance(1.0, 100_000, 2).unwrap();
        assert_relative_eq!(v, 9.20673594208e-6, max_relative = 1e-10);
    }

    #[test]
    fn domain_round_trip() {
        let d = Domain::new(alloc::vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert_eq!(d.d(), 3);
        assert_eq!(d.index_of("b"), Some(1));
        assert_eq!(d.index_of("z"), None);
        assert!(Domain::new(alloc::vec!["a".into(), "a".into()]).is_err());
        assert!(Domain::new(alloc::vec!["a".into()]).is_err());
    }

    #[test]
    fn true_histogram_invariant_checked() {
        assert!(Histogram(alloc::vec![0.5, 0.5]).check_true().is_ok());
        assert!(Histogram(alloc::vec![0.5, 0.6]).check_true().is_err());
        assert!(Histogram(alloc::vec![-0.1, 1.1]).check_true().is_err());
    }
}
