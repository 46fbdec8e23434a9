use divcorr::approximants::{hildebrand_main, hildebrand_main_explicit, script_l};
use divcorr::constants::{hildebrand_prime_sum, primes_up_to, EULER_GAMMA};
use divcorr::correlations::s2_reduced;
use divcorr::lemmas::{
    euler_p1, euler_p1_bracket, inverse_phi, lemma1, lemma1_main, lemma2, lemma3, lemma4, lemma4_main, lemma5,
    lemma5_main, m_of, mult_identity_check, MonicPolyPair,
};
use divcorr::numeric::{rat, rational_to_f64};
use divcorr::singular::{constant_c, singular_sn};
use num_rational::BigRational;
use num_traits::Zero;

#[test]
fn error_normalization() {
    assert_eq!(m_of(1).unwrap(), 1.0);
    let six = (1.0 + 1.0 / 2f64.sqrt()) * (1.0 + 1.0 / 3f64.sqrt());
    assert!((m_of(6).unwrap() - six).abs() < 1e-15);
    assert!((m_of(6).unwrap() - 2.6925).abs() < 1e-3);
    assert_eq!(m_of(-6).unwrap(), m_of(6).unwrap());
}

#[test]
fn hildebrand_special_case() {
    let pair = MonicPolyPair::hildebrand();
    let rep = lemma1(&pair, 1, &[10, 1000, 10_000]).unwrap();
    for (i, &x) in rep.x_ladder.iter().enumerate() {
        let exact = rational_to_f64(&script_l(x, 1));
        assert!((rep.lhs[i] - exact).abs() < 1e-10 * exact, "x={x}");
        assert_eq!(rep.main[i].to_bits(), hildebrand_main(x as f64, 1).to_bits());
        assert!((rep.main[i] - hildebrand_main_explicit(x as f64, 1)).abs() < 1e-9);
    }
}

#[test]
fn cubic_special_case_main_term() {
    let pair = MonicPolyPair::cubic();
    let primes = primes_up_to(2_000_000);
    let mut log_product = 0.0;
    let mut log_sum = 0.0;
    for &p in primes.iter() {
        let p = p as f64;
        let q = p * p * p - 2.0 * p * p + 2.0 * p - 2.0;
        log_product += ((p - 2.0) / (p * (p - 1.0) * (p - 1.0))).ln_1p();
        log_sum += (2.0 * p - 3.0) * p.ln() / ((p - 1.0) * q);
    }
    for k in [1u64, 6] {
        let mut local = 1.0;
        let mut local_sum = 0.0;
        for p in [2.0f64, 3.0] {
            if k == 1 {
                break;
            }
            let q = p * p * p - 2.0 * p * p + 2.0 * p - 2.0;
            local *= (p - 1.0).powi(3) / q;
            local_sum += (p * p - p - 1.0) * p.ln() / q;
        }
        for x in [1e4, 1e6] {
            let expect = log_product.exp() * local * (f64::ln(x) + EULER_GAMMA + log_sum + local_sum);
            let got = lemma1_main(&pair, x, k);
            assert!((got - expect).abs() < 1e-6 * expect, "k={k}, x={x}: {got} vs {expect}");
        }
    }
}

#[test]
fn lemma1_scaled_error_ladder() {
    for pair in [MonicPolyPair::hildebrand(), MonicPolyPair::cubic()] {
        for k in [1u64, 30] {
            let rep = lemma1(&pair, k, &[10_000, 100_000, 1_000_000]).unwrap();
            println!("P2 = {:?}, k={k}: scaled errors {:?}", pair.p2.0, rep.scaled_error);
            assert!(rep.scaled_error.iter().all(|e| e.is_finite() && *e < 1.0));
            assert!(rep.growth() <= 2.0);
        }
    }
}

#[test]
fn lemma1_rejects_bad_pairs() {
    assert!(MonicPolyPair::new(vec![1], vec![-2, 1], 100).is_err());
    assert!(MonicPolyPair::new(vec![1], vec![1, 0, 1], 100).is_err());
    assert!(MonicPolyPair::new(vec![2], vec![-1, 1], 100).is_err());
    let short = MonicPolyPair::new(vec![1], vec![-1, 1], 1000).unwrap();
    assert!(lemma1(&short, 1, &[100, 10_000]).is_err());
}

#[test]
fn lemma2_first_terms() {
    let rep = lemma2(&[1, 2]).unwrap();
    assert_eq!(rep.lhs, vec![1.0, 1.0]);
}

#[test]
fn lemma2_convergence() {
    let rep = lemma2(&[100_000, 1_000_000, 10_000_000]).unwrap();
    let d1 = (rep.lhs[1] - rep.lhs[0]).abs();
    let d2 = (rep.lhs[2] - rep.lhs[1]).abs();
    assert!(d2 < d1);
    assert_eq!(rep.observations["diff_1000000_10000000"], d2);
    let sup = rep.observations["sup_abs"];
    println!("sup |S(x)| = {sup}");
    assert!(sup.is_finite() && sup >= 1.0);
}

#[test]
fn lemma3_first_terms() {
    let rep = lemma3(&[1, 3]).unwrap();
    assert_eq!(rep.lhs[0], 1.0);
    let expect = 1.0 + 2.0 / (2f64.sqrt() - 1.0) + 5.0 / (2.0 * (3f64.sqrt() - 1.0));
    assert!((rep.lhs[1] - expect).abs() < 1e-12);
    assert!((rep.lhs[1] - (1.0 + 4.8284 + 3.4151)).abs() < 1e-3);
}

#[test]
fn lemma3_leading_constant() {
    let a = euler_p1(1_000_000);
    let b = euler_p1_bracket(1_000_000);
    assert!((a.value - b.value).abs() < 1e-9);
    let rep = lemma3(&[100_000, 1_000_000, 10_000_000]).unwrap();
    let rel: Vec<f64> = rep.scaled_error.iter().map(|e| e.abs()).collect();
    println!("lhs/(P(1)√x log²x) − 1: {:?}", rep.scaled_error);
    assert!(rel.windows(2).all(|w| w[1] < w[0]));
    assert!(rep.main.iter().zip(&rep.x_ladder).all(|(m, &x)| {
        let x = x as f64;
        (m - a.value * x.sqrt() * x.ln().powi(2)).abs() < 1e-9 * m
    }));
}

#[test]
fn lemma4_odd_shift_and_modulus() {
    for (j, k) in [(3i64, 1u64), (5, 3), (-7, 5)] {
        assert_eq!(lemma4_main(j, k).unwrap(), 0.0);
        let rep = lemma4(j, k, &[10_000, 1_000_000], false).unwrap();
        assert!(rep.lhs[1].abs() < 1e-5, "j={j}, k={k}: {}", rep.lhs[1]);
    }
}

#[test]
fn lemma4_limit_is_the_pair_series() {
    let s = singular_sn(2, 2).unwrap().value;
    assert!((lemma4_main(2, 1).unwrap() - s).abs() < 1e-12);
    let rep = lemma4(2, 1, &[10_000, 100_000, 1_000_000], false).unwrap();
    assert!((rep.lhs[2] - s).abs() < 1e-8);
    let reduced = rational_to_f64(&s2_reduced(1, 2, 10_000));
    assert!((rep.lhs[0] - reduced).abs() < 1e-12);
}

#[test]
fn lemma4_scaled_residual() {
    for (j, k) in [(2i64, 1u64), (6, 1), (12, 5), (30, 7)] {
        let rep = lemma4(j, k, &[10_000, 100_000, 1_000_000], false).unwrap();
        println!("j={j}, k={k}: scaled residuals {:?}", rep.scaled_error);
        assert!(rep.scaled_error.iter().all(|e| *e < 10.0));
    }
    let log = lemma4(6, 1, &[10_000, 100_000, 1_000_000], true).unwrap();
    println!("log-weighted j=6: scaled residuals {:?}", log.scaled_error);
    assert!(log.scaled_error.iter().all(|e| e.is_finite()));
    assert!((log.lhs[2] - log.main[2]).abs() < (log.lhs[0] - log.main[0]).abs());
}

#[test]
fn lemma5_even_modulus_vanishes() {
    assert_eq!(lemma5_main(6, 2).unwrap(), 0.0);
    let rep = lemma5(6, 2, &[10_000, 100_000, 1_000_000]).unwrap();
    assert!(rep.lhs[2].abs() < 1e-6);
}

#[test]
fn lemma5_main_term_at_six() {
    let c3 = constant_c(3, 1_000_000).unwrap().value;
    // p = 3 divides J: its generic factor is dropped and (1 + 1/2) applied
    let expect = 2.0 * c3 * 1.5;
    assert!((lemma5_main(6, 1).unwrap() - expect).abs() < 1e-12);
    let rep = lemma5(6, 1, &[10_000, 100_000, 1_000_000]).unwrap();
    assert!((rep.lhs[2] / expect - 1.0).abs() <= 0.01);
}

#[test]
fn lemma5_same_prime_support() {
    assert_eq!(lemma5_main(2, 1).unwrap(), lemma5_main(4, 1).unwrap());
    assert_eq!(lemma5_main(6, 1).unwrap(), lemma5_main(12, 1).unwrap());
    assert!(lemma5(3, 1, &[100]).is_err());
    assert!(lemma5(6, 4, &[100]).is_err());
}

#[test]
fn multiplicative_log_identity() {
    assert!(mult_identity_check(1, inverse_phi).unwrap().residual().is_zero());
    for p in [2i64, 7, 101] {
        let id = mult_identity_check(p, inverse_phi).unwrap();
        assert!(id.residual().is_zero());
        assert_eq!(id.lhs.get(&(p as u64)), Some(&inverse_phi(p as u64)));
    }
    let id = mult_identity_check(30, inverse_phi).unwrap();
    assert!(id.residual().is_zero());
    assert!((id.eval_lhs() - id.eval_rhs()).abs() < 1e-12);
    let brute: f64 = divcorr::factor::divisors(30)
        .into_iter()
        .map(|d| (d as f64).ln() / divcorr::factor::euler_phi(d) as f64)
        .sum();
    assert!((id.eval_lhs() - brute).abs() < 1e-12);
    let other = mult_identity_check(-210, |p| rat(p as i64, 3)).unwrap();
    assert_eq!(other.residual(), BigRational::zero());
}

#[test]
fn constants_agree_across_modules() {
    let c2 = constant_c(2, 1_000_000).unwrap().value;
    assert!((lemma4_main(2, 1).unwrap() / 2.0 - c2).abs() < 1e-12);
    let rep = lemma1(&MonicPolyPair::hildebrand(), 1, &[100]).unwrap();
    assert!((rep.observations["prime_log_sum"] - hildebrand_prime_sum().value).abs() < 1e-9);
    assert!((rep.observations["euler_product"] - 1.0).abs() < 1e-12);
}
