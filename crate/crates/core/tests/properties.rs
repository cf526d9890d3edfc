mod common;

use proptest::prelude::*;

use adjscore_core::betabin::{betabin_l_expectations, betabin_logpmf};
use adjscore_core::rng::stream_rng;
use adjscore_core::selftest::random_tensor;
use adjscore_core::{compute_adjustments, index_notation_oracle};

use common::*;

fn scaled(v: &nalgebra::DVector<f64>, r: usize) -> f64 {
    v[r].abs().max(1e-8 * v.amax())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn matrix_form_matches_index_notation(seed in any::<u64>(), d in 2usize..=4) {
        let t = random_tensor(d, &mut stream_rng(seed, 0));
        let b = compute_adjustments(&t.to_cumulant_set()).unwrap();
        let o = index_notation_oracle(&t).unwrap();
        for r in 0..d {
            prop_assert!((b.m1[r] - o[r]).abs() <= 1e-10 * scaled(&o, r), "r={r}: {} vs {}", b.m1[r], o[r]);
        }
    }

    #[test]
    fn median_adjustment_is_mean_minus_correction(seed in any::<u64>(), d in 1usize..=5) {
        let t = random_tensor(d, &mut stream_rng(seed, 1));
        let set = t.to_cumulant_set();
        let b = compute_adjustments(&set).unwrap();
        let rhs = &b.mean_adj - &set.info * &b.f2_tilde;
        for r in 0..d {
            prop_assert!((b.median_adj[r] - rhs[r]).abs() <= 1e-12 * scaled(&rhs, r));
        }
    }

    #[test]
    fn betabin_pmf_sums_to_one(m in 1u64..80, mu in 0.01f64..0.99, phi in 0.01f64..0.95) {
        let total: f64 = (0..=m).map(|y| betabin_logpmf(y, m, mu, phi).unwrap().exp()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "{total}");
    }

    #[test]
    fn betabin_bartlett_identities(m in 1u64..40, mu in 0.02f64..0.98, phi in 0.02f64..0.9) {
        let mut e = [0.0f64; 8];
        for y in 0..=m {
            let r = betabin_direct(y, m, mu, phi);
            let p = r[0].exp();
            e[0] += p * r[1];
            e[1] += p * r[2];
            e[2] += p * r[1] * r[1];
            e[3] += p * r[3];
            e[4] += p * r[1] * r[2];
            e[5] += p * r[4];
            e[6] += p * r[2] * r[2];
            e[7] += p * r[5];
        }
        let s = e[2].abs().max(e[6].abs()).max(1.0);
        prop_assert!(e[0].abs() <= 1e-10 * s);
        prop_assert!(e[1].abs() <= 1e-10 * s);
        prop_assert!((e[2] + e[3]).abs() <= 1e-10 * s);
        prop_assert!((e[4] + e[5]).abs() <= 1e-10 * s);
        prop_assert!((e[6] + e[7]).abs() <= 1e-10 * s);
    }

    /// The sixteen exhaustive expectations against direct per-outcome sums.
    #[test]
    fn l_expectations_match_direct_sums(m in 1u64..30, mu in 0.02f64..0.98, phi in 0.02f64..0.9) {
        let l = betabin_l_expectations(m, mu, phi).unwrap();
        let mut e = [0.0f64; 5];
        for y in 0..=m {
            let r = betabin_direct(y, m, mu, phi);
            let p = r[0].exp();
            e[0] += p * r[3];
            e[1] += p * r[4];
            e[2] += p * r[5];
            e[3] += p * r[1].powi(3);
            e[4] += p * r[2].powi(3);
        }
        let s = e[0].abs().max(e[2].abs()).max(1.0);
        prop_assert!((l.get(1) - e[0]).abs() <= 1e-10 * s);
        prop_assert!((l.get(2) - e[1]).abs() <= 1e-10 * s);
        prop_assert!((l.get(3) - e[2]).abs() <= 1e-10 * s);
        prop_assert!((l.get(4) - e[3]).abs() <= 1e-10 * e[3].abs().max(1.0));
        prop_assert!((l.get(7) - e[4]).abs() <= 1e-10 * e[4].abs().max(1.0));
    }
}

#[test]
fn betabin_cumulants_match_joint_enumeration() {
    let worst = brute_force_suite();
    assert!(worst <= 1e-10, "{worst:e}");
}

#[test]
fn scores_match_finite_differences() {
    let worst = score_fd_suite();
    assert!(worst <= 1e-5, "{worst:e}");
}

#[test]
fn median_br_invariant_under_precision_link_swap() {
    let worst = link_swap_invariance();
    assert!(worst <= 1e-6, "{worst:e}");
}

/// The oracle must notice a wrong weight on `P` in the `F2` combination.
#[test]
fn perturbed_third_weight_breaks_equivalence() {
    let mut detected = 0;
    for seed in 0..20 {
        let t = random_tensor(3, &mut stream_rng(seed, 2));
        let set = t.to_cumulant_set();
        let mut c = set.combined();
        c.weighted = set
            .p
            .iter()
            .zip(&set.q)
            .map(|(p, q)| p / 4.0 + q / 2.0)
            .collect();
        let b = adjscore_core::compute_adjustments_combined(&c).unwrap();
        let o = index_notation_oracle(&t).unwrap();
        if (0..3).any(|r| (b.m1[r] - o[r]).abs() > 1e-10 * scaled(&o, r)) {
            detected += 1;
        }
    }
    assert_eq!(detected, 20);
}
