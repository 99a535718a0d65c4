//! The publish-or-approximate decision shared by the adaptive mechanisms.
//!
//! At each step an adaptive mechanism asks: is the stream far enough from
//! the last release that a fresh (noisier, budget- or user-costly)
//! publication beats re-emitting it? The true gap is
//! `dis* = (1/d) sum_k (f_t[k] - r[k])^2` against the previous release `r`.
//! Estimating it from a perturbed cohort inflates each squared term by that
//! cohort's estimator variance, so subtracting the average variance makes
//! the estimate unbiased:
//! `dis = (1/d) sum_k (est[k] - r[k])^2 - V(eps_1, n_1)`.
//!
//! Negative values are kept; clamping would reintroduce bias, and the
//! comparison against the publication error handles them correctly (a
//! negative gap never justifies publishing).

use crate::error::Error;
use crate::freq::{avg_variance, Histogram};
use crate::stream::Strategy;

/// Unbiased estimate of the mean squared gap to the previous release.
///
/// `estimate` comes from the dissimilarity cohort, `previous` is the last
/// release, `var_avg` is the cohort's average estimator variance.
pub fn estimate_dissimilarity(
    estimate: &Histogram,
    previous: &Histogram,
    var_avg: f64,
) -> Result<f64, Error> {
    if estimate.d() != previous.d() {
        return Err(Error::LengthMismatch { expected: previous.d(), got: estimate.d() });
    }
    let d = estimate.d() as f64;
    let mut sq = 0.0;
    for (e, r) in estimate.0.iter().zip(previous.0.iter()) {
        let gap = e - r;
        sq += gap * gap;
    }
    Ok(sq / d - var_avg)
}

/// Error a fresh publication would carry: the average estimator variance of
/// the publication cohort, or infinity when no budget or users remain
/// (`eps <= 0` or `n == 0`), which forces approximation.
pub fn publication_error(epsilon: f64, n: u64, d: usize) -> Result<f64, Error> {
    if epsilon <= 0.0 || n == 0 {
        return Ok(f64::INFINITY);
    }
    avg_variance(epsilon, n, d)
}

/// Publish exactly when the estimated gap STRICTLY exceeds the publication
/// error. Ties approximate: equal error means publishing buys nothing.
pub fn choose_strategy(dis: f64, err: f64) -> Strategy {
    if dis > err {
        Strategy::Publish
    } else {
        Strategy::Approximate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dissimilarity_is_mean_square_minus_variance() {
        let est = Histogram(vec![0.6, 0.4]);
        let prev = Histogram(vec![0.5, 0.5]);
        // (0.01 + 0.01)/2 - 0.003 = 0.007
        let dis = estimate_dissimilarity(&est, &prev, 0.003).unwrap();
        assert_abs_diff_eq!(dis, 0.007, epsilon = 1e-12);
    }

    #[test]
    fn dissimilarity_can_go_negative() {
        let est = Histogram(vec![0.5, 0.5]);
        let prev = Histogram(vec![0.5, 0.5]);
        let dis = estimate_dissimilarity(&est, &prev, 0.01).unwrap();
        assert_abs_diff_eq!(dis, -0.01, epsilon = 1e-12);
    }

    #[test]
    fn dissimilarity_rejects_mismatched_sizes() {
        let est = Histogram(vec![0.5, 0.5]);
        let prev = Histogram(vec![0.3, 0.3, 0.4]);
        assert_eq!(
            estimate_dissimilarity(&est, &prev, 0.0),
            Err(Error::LengthMismatch { expected: 3, got: 2 })
        );
    }

    #[test]
    fn publication_error_degenerate_inputs_force_approximation() {
        assert_eq!(publication_error(0.0, 100, 2).unwrap(), f64::INFINITY);
        assert_eq!(publication_error(-0.5, 100, 2).unwrap(), f64::INFINITY);
        assert_eq!(publication_error(1.0, 0, 2).unwrap(), f64::INFINITY);
        assert!(publication_error(1.0, 100, 2).unwrap().is_finite());
    }

    #[test]
    fn strategy_strictness() {
        assert_eq!(choose_strategy(0.02, 0.01), Strategy::Publish);
        assert_eq!(choose_strategy(0.01, 0.01), Strategy::Approximate);
        assert_eq!(choose_strategy(0.005, 0.01), Strategy::Approximate);
        assert_eq!(choose_strategy(-0.1, 0.01), Strategy::Approximate);
        // Infinite error always approximates, even against a huge gap.
        assert_eq!(choose_strategy(1e9, f64::INFINITY), Strategy::Approximate);
    }
}
