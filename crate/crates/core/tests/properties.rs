use divcorr::approximants::{lambda_r_direct, ApproximantWeights};
use divcorr::correlations::{
    lambda_r_window_scaled, pair_kernel_brute, pair_kernel_closed, product_sum, triple_kernel_brute,
    triple_kernel_closed,
};
use divcorr::factor;
use divcorr::moments::{moment_psi_r_exact, stirling2};
use divcorr::singular::{singular_vector_with, u_transform};
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

const P_CUT: u64 = 10_000;

fn distinct_shifts(len: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::btree_set(-30i64..30, len).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mobius_sums_to_indicator(n in 1u64..100_000) {
        let total: i64 = factor::divisors(n).into_iter().map(factor::mobius).sum();
        prop_assert_eq!(total, i64::from(n == 1));
    }

    #[test]
    fn weight_form_matches_direct_form(n in 1i64..5_000, r in 1u64..200) {
        let w = ApproximantWeights::new_exact(r).unwrap();
        let from_weights = &w.range_exact(n, n).unwrap()[0];
        prop_assert_eq!(from_weights, &lambda_r_direct(n, r));
    }

    #[test]
    fn product_sums_are_shift_invariant(r in 1u64..60, j in -20i64..20, lo in 1i64..300, len in 0i64..300) {
        let w = ApproximantWeights::new_exact(r).unwrap();
        let win = lambda_r_window_scaled(&w, lo - 45, lo + len + 45).unwrap();
        let a = product_sum(lo, lo + len, &[(&win, j, 1), (&win, j + 2, 2)]);
        let b = product_sum(lo + j, lo + len + j, &[(&win, 0, 1), (&win, 2, 2)]);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn product_sums_ignore_factor_order(r in 1u64..60, shifts in distinct_shifts(3), a in prop::array::uniform3(1u32..3)) {
        let w = ApproximantWeights::new_exact(r).unwrap();
        let win = lambda_r_window_scaled(&w, -40, 240).unwrap();
        let fwd: Vec<_> = (0..3).map(|i| (&win, shifts[i], a[i])).collect();
        let rev: Vec<_> = fwd.iter().rev().copied().collect();
        prop_assert_eq!(product_sum(1, 200, &fwd), product_sum(1, 200, &rev));
    }

    #[test]
    fn series_are_translation_invariant(shifts in distinct_shifts(3), c in -1000i64..1000) {
        let moved: Vec<i64> = shifts.iter().map(|j| j + c).collect();
        let a = singular_vector_with(&shifts, P_CUT).unwrap().value;
        let b = singular_vector_with(&moved, P_CUT).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn series_are_permutation_invariant(shifts in distinct_shifts(3)) {
        let rev: Vec<i64> = shifts.iter().rev().copied().collect();
        let a = singular_vector_with(&shifts, P_CUT).unwrap().value;
        let b = singular_vector_with(&rev, P_CUT).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        let ua = u_transform(&shifts).unwrap();
        let ub = u_transform(&rev).unwrap();
        prop_assert!((ua - ub).abs() <= 1e-12 * ua.abs().max(1.0));
    }

    #[test]
    fn pair_kernel_closed_form(r1 in 1u64..500, r2 in 1u64..500, j in -100i64..100) {
        prop_assert_eq!(pair_kernel_brute(r1, r2, j), pair_kernel_closed(r1, r2, j));
    }

    #[test]
    fn triple_kernel_closed_form(a in 1u64..150, j1 in -20i64..20, j2 in -20i64..20) {
        if factor::is_squarefree(a) {
            prop_assert_eq!(triple_kernel_brute(a, j1, j2), triple_kernel_closed(a, j1, j2).unwrap());
        } else {
            prop_assert!(triple_kernel_closed(a, j1, j2).is_err());
        }
    }

    #[test]
    fn stirling_recurrence(k in 2u32..=20, r in 1u32..=20) {
        prop_assume!(r <= k);
        let prev = |r: u32| if r == 0 || r > k - 1 { 0 } else { stirling2(k - 1, r).unwrap() };
        prop_assert_eq!(stirling2(k, r).unwrap(), r as u64 * prev(r) + prev(r - 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn second_moment_is_nonnegative(n in 50u64..600, h in 1u64..20, r in 1u64..40) {
        let rep = moment_psi_r_exact(n, h, r, 2).unwrap();
        prop_assert_eq!(rep.exact_agreement(), Some(true));
        prop_assert!(rep.computed_exact.unwrap() >= BigRational::zero());
    }
}
