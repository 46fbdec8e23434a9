use divcorr::approximants::{ApproximantWeights, Truncation};
use divcorr::arith::ArithTables;
use divcorr::constants::{EULER_GAMMA, LOG_TWO_PI};
use divcorr::moments::{
    compositions, coupled_c, coupled_m3_prediction, expand_via_correlations, first_moment_identity, mixed_moment,
    moment_psi, moment_psi_r, moment_psi_r_exact, mu_k, multinomial, omega_experiment, stirling2,
};
use divcorr::Error;
use std::sync::OnceLock;

fn tables() -> &'static ArithTables {
    static T: OnceLock<ArithTables> = OnceLock::new();
    T.get_or_init(|| ArithTables::build(10_010_000).unwrap())
}

fn h_for(n: u64) -> u64 {
    (n as f64).ln().ceil() as u64
}

#[test]
fn grouping_identity_first_moment() {
    let rep = moment_psi_r_exact(2_000, 7, 20, 1).unwrap();
    assert_eq!(rep.exact_agreement(), Some(true));
    let w = ApproximantWeights::new_exact(20).unwrap();
    let vals = w.range_exact(1, 2_007).unwrap();
    let mut direct = num_rational::BigRational::from_integer(0.into());
    for n in 1..=2_000usize {
        for j in 1..=7 {
            direct += &vals[n + j - 1];
        }
    }
    assert_eq!(rep.computed_exact.unwrap(), direct);
}

#[test]
fn grouping_identity_second_moment() {
    let rep = moment_psi_r_exact(10_000, 5, 50, 2).unwrap();
    assert_eq!(rep.exact_agreement(), Some(true));
}

#[test]
fn grouping_identity_on_a_grid() {
    for (n, h, r) in [(300u64, 1u64, 1u64), (1_000, 3, 7), (2_500, 10, 50), (10_000, 4, 13)] {
        for k in 1..=3 {
            let rep = moment_psi_r_exact(n, h, r, k).unwrap();
            assert_eq!(rep.exact_agreement(), Some(true), "N={n}, h={h}, R={r}, k={k}");
            let f = expand_via_correlations(n, h, Truncation::integer(r), k).unwrap();
            assert!(f.relative_expansion_residual().unwrap() <= 1e-9);
        }
    }
}

#[test]
fn corollary_one_cubic_cell() {
    let mut ratios = Vec::new();
    for n in [100_000u64, 1_000_000] {
        let r = Truncation::power(n, 0.2).unwrap();
        let h = h_for(n);
        let rep = moment_psi_r(n, h, r, 3).unwrap();
        let (lam, theta, log_n) = (rep.lambda_param, rep.theta.unwrap(), (n as f64).ln());
        let shape = 0.75 * theta * theta * lam + 3.0 * theta * lam * lam + lam.powi(3);
        let ratio = rep.computed / (n as f64 * log_n.powi(3) * shape);
        assert!((ratio - rep.computed / rep.predicted.unwrap()).abs() < 1e-12);
        println!("N={n}, h={h}: M_3/prediction = {ratio:.4}");
        ratios.push(ratio);
    }
    assert!(ratios[1] > ratios[0] && ratios[1] < 1.0);
}

#[test]
fn gallagher_second_moment() {
    let mut ratios = Vec::new();
    for n in [1_000_000u64, 10_000_000] {
        let h = h_for(n);
        let rep = moment_psi(tables(), n, h, 2).unwrap();
        let lam = rep.lambda_param;
        let expect = n as f64 * (n as f64).ln().powi(2) * (lam + lam * lam);
        assert!((rep.predicted.unwrap() - expect).abs() < 1e-6 * expect);
        let ratio = rep.computed / expect;
        println!("N={n}, h={h}: M_2(ψ)/prediction = {ratio:.4}");
        ratios.push(ratio);
    }
    assert!(ratios[1] > ratios[0] && ratios[1] < 1.0);
}

#[test]
fn centered_second_moment() {
    let n = 10_000_000u64;
    let h = 1000u64;
    let rep = mu_k(tables(), n, h, 2).unwrap();
    let hf = h as f64;
    let log_ratio = (n as f64 / hf).ln();
    let leading = rep.computed / (n as f64 * hf * log_ratio);
    let refined = rep.computed / (n as f64 * hf * (log_ratio - EULER_GAMMA - LOG_TWO_PI));
    println!("μ_2/(Nh log(N/h)) = {leading:.4}, with the constant term {refined:.4}");
    assert!((refined - 1.0).abs() <= 0.05);
    let smaller = mu_k(tables(), 1_000_000, h, 2).unwrap();
    assert!(leading > smaller.computed / smaller.predicted.unwrap());
}

#[test]
fn centered_first_moment() {
    let mut scaled = Vec::new();
    for n in [100_000u64, 1_000_000, 10_000_000] {
        let h = (n as f64).powf(0.4) as u64;
        let rep = mu_k(tables(), n, h, 1).unwrap();
        assert!(rep.predicted.is_none());
        println!("N={n}, h={h}: μ_1/N = {:.5}", rep.computed / n as f64);
        scaled.push((rep.computed / (n * h) as f64).abs());
    }
    assert!(scaled.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn stirling_numbers() {
    assert_eq!(stirling2(3, 2).unwrap(), 3);
    for k in 1..=20 {
        assert_eq!(stirling2(k, 1).unwrap(), 1);
        assert_eq!(stirling2(k, k).unwrap(), 1);
    }
    let falling = |x: u64, r: u32| (0..r as u64).map(|i| x.saturating_sub(i)).product::<u64>();
    let total: u64 = (1..=4).map(|r| stirling2(4, r).unwrap() * falling(2, r)).sum();
    assert_eq!(total, 16);
    assert!(matches!(stirling2(21, 3), Err(Error::Range(_))));
    assert!(matches!(stirling2(3, 4), Err(Error::Range(_))));
    assert!(matches!(stirling2(3, 0), Err(Error::Range(_))));
}

#[test]
fn compositions_and_multinomials() {
    assert_eq!(compositions(3, 2), vec![vec![1, 2], vec![2, 1]]);
    assert_eq!(compositions(3, 1), vec![vec![3]]);
    assert_eq!(multinomial(&[1, 2]), 3);
    assert_eq!(multinomial(&[1, 1, 1]), 6);
    for k in 1..=6u32 {
        let total: u64 = (1..=k)
            .flat_map(|r| compositions(k, r))
            .map(|a| multinomial(&a))
            .sum();
        // ordered set partitions of a k-set
        let fubini: u64 = (1..=k).map(|r| stirling2(k, r).unwrap() * (1..=r as u64).product::<u64>()).sum();
        assert_eq!(total, fubini, "k={k}");
    }
}

#[test]
fn first_moment_with_unit_interval() {
    let t = tables();
    let n = 10_000u64;
    let id = first_moment_identity(t, n, 1).unwrap();
    assert!(id.split_exact());
    let shifted: f64 = (1..=n).map(|m| t.lambda(m + 1)).sum();
    assert!((id.direct_value - shifted).abs() < 1e-9 * shifted);
    assert!((id.direct_value - (t.psi(n as i64 + 1) - t.psi(1))).abs() < 1e-9 * shifted);
}

#[test]
fn first_moment_rearrangements() {
    let t = tables();
    let id = first_moment_identity(t, 100_000, 100).unwrap();
    assert!(id.split_exact());
    assert!(id.integral_exact());
    assert!((id.error_form_offset - 2.0).abs() < 1e-6 * id.direct_value.abs().max(1.0));
    let m1 = moment_psi(t, 100_000, 100, 1).unwrap();
    assert!((m1.computed - id.direct_value).abs() < 1e-9 * m1.computed);
    assert!(first_moment_identity(t, 10, 11).is_err());
}

#[test]
fn mixed_first_moment_is_the_prime_moment() {
    let t = tables();
    let n = 50_000u64;
    let h = 12u64;
    let mixed = mixed_moment(t, n, h, Truncation::integer(100), 1).unwrap();
    let prime = moment_psi(t, n, h, 1).unwrap();
    assert_eq!(mixed.computed.to_bits(), prime.computed.to_bits());
}

#[test]
fn corollary_two_cells() {
    let mut by_k = [Vec::new(), Vec::new()];
    for n in [1_000_000u64, 10_000_000] {
        let r = Truncation::power(n, 0.3).unwrap();
        let h = h_for(n);
        for (i, k) in [2u32, 3].into_iter().enumerate() {
            let rep = mixed_moment(tables(), n, h, r, k).unwrap();
            let (lam, theta) = (rep.lambda_param, rep.theta.unwrap());
            let shape = if k == 2 {
                theta * lam + lam * lam
            } else {
                theta * theta * lam + 3.0 * theta * lam * lam + lam.powi(3)
            };
            let ratio = rep.computed / (n as f64 * (n as f64).ln().powi(k as i32) * shape);
            assert!((ratio - rep.computed / rep.predicted.unwrap()).abs() < 1e-12);
            let rel = rep.relative_expansion_residual().unwrap();
            println!("N={n}, k={k}: ratio {ratio:.4}, expansion residual {rel:.2e}");
            assert!(rel <= 0.05);
            by_k[i].push(ratio);
        }
    }
    for ratios in &by_k {
        assert!(ratios[1] > ratios[0] && ratios[1] < 1.0);
    }
}

#[test]
fn shifted_moment_expansions() {
    let t = tables();
    let res = omega_experiment(t, 100_000, 50, 0.3, -0.5, Truncation::integer(1000)).unwrap();
    assert!(res.exact_agreement);
    let rel = res.relative_residuals();
    assert!(rel.iter().all(|&x| x <= 1e-9), "{rel:?}");
    assert!((res.a - (50.0 * (1e5f64).ln()).sqrt()).abs() < 1e-12);
    assert!(res.outside_proven_regime);
}

#[test]
fn shifted_first_moment_degenerate_parameters() {
    let t = tables();
    let n = 20_000u64;
    let h = 40u64;
    let res = omega_experiment(t, n, h, 0.0, 0.0, Truncation::integer(100)).unwrap();
    let expect = res.pieces.m1_psi - (h * n) as f64;
    assert!((res.m1 - expect).abs() <= 1e-9 * res.pieces.m1_psi);
    let direct: f64 = (n + 1..=2 * n).map(|m| t.psi((m + h) as i64) - t.psi(m as i64)).sum();
    assert!((res.pieces.m1_psi - direct).abs() <= 1e-9 * direct);
}

#[test]
fn shifted_moments_need_a_long_interval() {
    assert!(matches!(
        omega_experiment(tables(), 100_000, 10, 0.3, -0.5, Truncation::integer(100)),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn coupled_preset() {
    let n = 100_000u64;
    let h = 50u64;
    let r = Truncation::integer(1000);
    let rho = 0.3;
    let c = coupled_c(n, h, r, rho).unwrap();
    let log_n = (n as f64).ln();
    let d = r.log() / log_n - (h as f64).ln() / log_n;
    assert!((c + d / rho).abs() < 1e-12);
    let res = omega_experiment(tables(), n, h, rho, c, r).unwrap();
    let general = res.predicted_m3;
    let coupled = coupled_m3_prediction(n, h, r, rho);
    assert!((general - coupled).abs() <= 1e-9 * coupled.abs());
    assert!(coupled_c(n, h, r, 0.0).is_err());
}

#[test]
fn second_moments_are_nonnegative() {
    for r in [1u64, 5, 30] {
        for h in [1u64, 4, 9] {
            let rep = moment_psi_r_exact(500, h, r, 2).unwrap();
            assert!(rep.computed_exact.unwrap() >= num_rational::BigRational::from_integer(0.into()));
        }
    }
}
