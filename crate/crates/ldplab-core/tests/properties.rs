//! Property tests over the mechanism and audit contracts.
//!
//! The central invariant: whatever the stream, seed, and shape parameters,
//! every mechanism's recorded spends must satisfy the window-budget audit,
//! and the sampling mechanisms must additionally satisfy once-per-window
//! participation. The audits are computed from the spend records alone, so
//! these tests exercise mechanism bookkeeping and audit logic against each
//! other.

use ldplab_core::audit::{audit_once_per_window, audit_window_budget, AuditOutcome};
use ldplab_core::freq::{grr_estimate, grr_perturb, perturb_tally, avg_variance, GrrParams};
use ldplab_core::metrics::{auc, event_labels, event_roc, Monitor, RocPoint};
use ldplab_core::stream::{
    build_mechanism, MechanismConfig, MechanismKind, StreamSnapshot,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kind_strategy() -> impl Strategy<Value = MechanismKind> {
    prop::sample::select(MechanismKind::ALL.to_vec())
}

proptest! {
    /// Estimates invert the perturbation exactly in expectation structure:
    /// whatever the counts, the estimated frequencies sum to 1.
    #[test]
    fn estimates_sum_to_one(
        eps in 0.05f64..6.0,
        d in 2usize..8,
        seed in any::<u64>(),
        n in 1u64..5000,
    ) {
        let params = GrrParams::new(eps, d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u64; d];
        let mut remaining = n;
        for slot in counts.iter_mut().take(d - 1) {
            let c = rng.random_range(0..=remaining);
            *slot = c;
            remaining -= c;
        }
        counts[d - 1] = remaining;
        let est = grr_estimate(&counts, n, &params).unwrap();
        let sum: f64 = est.0.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
    }

    /// Perturbation never leaves the domain and keeps the input unchanged
    /// with probability at least p > 1/d.
    #[test]
    fn perturbation_stays_in_domain(
        eps in 0.05f64..6.0,
        d in 2usize..8,
        v in 0usize..8,
        seed in any::<u64>(),
    ) {
        let v = v % d;
        let params = GrrParams::new(eps, d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..64 {
            let out = grr_perturb(v, &params, &mut rng).unwrap();
            prop_assert!(out < d);
        }
    }

    /// Tally batch agrees with the scalar perturbation stream.
    #[test]
    fn tally_matches_scalar_perturbation(
        eps in 0.1f64..4.0,
        d in 2usize..5,
        seed in any::<u64>(),
    ) {
        let params = GrrParams::new(eps, d).unwrap();
        let values: Vec<u16> = (0..50u16).map(|i| i % d as u16).collect();
        let mut a = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ChaCha8Rng::seed_from_u64(seed);
        let counts = perturb_tally(&values, &params, &mut a).unwrap();
        let mut expected = vec![0u64; d];
        for &v in &values {
            expected[grr_perturb(v as usize, &params, &mut b).unwrap()] += 1;
        }
        prop_assert_eq!(counts, expected);
    }

    /// More budget or more users never hurts estimation error.
    #[test]
    fn variance_is_monotone(
        eps in 0.1f64..4.0,
        bump in 0.01f64..2.0,
        n in 10u64..100_000,
        d in 2usize..10,
    ) {
        let base = avg_variance(eps, n, d).unwrap();
        prop_assert!(avg_variance(eps + bump, n, d).unwrap() < base);
        prop_assert!(avg_variance(eps, 2 * n, d).unwrap() < base);
    }

    /// Any run of any mechanism passes the window-budget audit, and runs of
    /// the sampling mechanisms pass once-per-window participation. Also
    /// cross-checks the reported upload counts against the spend records.
    #[test]
    fn mechanism_runs_satisfy_their_audits(
        kind in kind_strategy(),
        w in 1u64..6,
        extra in 0u64..30,
        eps in 0.2f64..4.0,
        d in 2usize..4,
        t_len in 1usize..18,
        seed in any::<u64>(),
    ) {
        let n = 2 * w + extra;
        let config = MechanismConfig { epsilon: eps, w, d, n, u_min: 1, seed };
        let mut mech = build_mechanism(kind, config).unwrap();
        let mut data_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut steps = Vec::with_capacity(t_len);
        for t in 1..=t_len as u64 {
            let values: Vec<u16> =
                (0..n).map(|_| data_rng.random_range(0..d as u16)).collect();
            let out = mech.step(&StreamSnapshot { t, values: &values }).unwrap();
            let uploads: u64 = out.budget_spent.iter().map(|s| s.upload_count(n)).sum();
            prop_assert_eq!(out.comm_events, uploads);
            prop_assert_eq!(out.release.d(), d);
            steps.push(out.budget_spent);
        }
        let budget = audit_window_budget(&steps, n, w, eps).unwrap();
        prop_assert!(matches!(budget, AuditOutcome::Pass), "budget audit: {budget:?}");
        if kind.samples_users() {
            let once = audit_once_per_window(&steps, n, w).unwrap();
            prop_assert!(matches!(once, AuditOutcome::Pass), "participation audit: {once:?}");
        }
    }

    /// Labels from a non-flat series always contain both classes, and the
    /// ROC sweep over any scores is a monotone staircase from (0,0) to
    /// (1,1) with area in [0,1].
    #[test]
    fn roc_is_a_monotone_staircase(
        seed in any::<u64>(),
        t_len in 2usize..40,
        fraction in 0.05f64..0.95,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truths: Vec<ldplab_core::freq::Histogram> = (0..t_len)
            .map(|_| {
                let p: f64 = rng.random();
                ldplab_core::freq::Histogram(vec![p, 1.0 - p])
            })
            .collect();
        let releases: Vec<ldplab_core::freq::Histogram> = (0..t_len)
            .map(|_| {
                let p: f64 = rng.random();
                ldplab_core::freq::Histogram(vec![p, 1.0 - p])
            })
            .collect();
        let series: Vec<f64> = truths.iter().map(|h| Monitor::Max.apply(h)).collect();
        let spread = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - series.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-9);
        let labels = event_labels(&series, fraction).unwrap();
        prop_assert!(labels.iter().any(|&l| l));
        prop_assert!(labels.iter().any(|&l| !l));

        let points = event_roc(&releases, &truths, Monitor::Max, fraction).unwrap();
        prop_assert_eq!(points.first(), Some(&RocPoint { fpr: 0.0, tpr: 0.0 }));
        prop_assert_eq!(points.last(), Some(&RocPoint { fpr: 1.0, tpr: 1.0 }));
        for pair in points.windows(2) {
            prop_assert!(pair[1].fpr >= pair[0].fpr - 1e-12);
            prop_assert!(pair[1].tpr >= pair[0].tpr - 1e-12);
        }
        let area = auc(&points);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&area));
    }

    /// Identical configuration and stream give identical outputs; the run
    /// is a pure function of inputs and seed.
    #[test]
    fn runs_are_reproducible(
        kind in kind_strategy(),
        w in 1u64..5,
        eps in 0.2f64..3.0,
        seed in any::<u64>(),
    ) {
        let n = 4 * w;
        let config = MechanismConfig { epsilon: eps, w, d: 2, n, u_min: 1, seed };
        let mut data_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(9));
        let stream: Vec<Vec<u16>> = (0..8)
            .map(|_| (0..n).map(|_| data_rng.random_range(0..2)).collect())
            .collect();
        let mut a = build_mechanism(kind, config).unwrap();
        let mut b = build_mechanism(kind, config).unwrap();
        for (i, values) in stream.iter().enumerate() {
            let t = i as u64 + 1;
            let out_a = a.step(&StreamSnapshot { t, values }).unwrap();
            let out_b = b.step(&StreamSnapshot { t, values }).unwrap();
            prop_assert_eq!(out_a, out_b);
        }
    }
}
