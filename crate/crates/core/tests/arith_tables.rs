use divcorr::arith::{phi2, squarefree_kernel, ArithTables};
use divcorr::factor;
use divcorr::Error;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn mobius_up_to_ten() {
    let t = ArithTables::build(10).unwrap();
    let mu: Vec<i8> = (1..=10).map(|n| t.mu(n)).collect();
    assert_eq!(mu, vec![1, -1, -1, 0, -1, 1, -1, 0, 0, 1]);
}

#[test]
fn nine_is_a_prime_square() {
    let t = ArithTables::build(10).unwrap();
    assert_eq!(t.phi(9), 6);
    assert_eq!(t.num_div(9), 3);
}

#[test]
fn chebyshev_at_ten() {
    let t = ArithTables::build(10).unwrap();
    let direct: f64 = (1..=10).map(|n| t.lambda(n)).sum();
    let expect = 3.0 * 2f64.ln() + 2.0 * 3f64.ln() + 5f64.ln() + 7f64.ln();
    assert!(close(t.psi(10), expect, 1e-12));
    assert!(close(direct, expect, 1e-12));
    assert!(close(expect, 7.8320, 5e-5));
}

#[test]
fn tables_reject_tiny_and_oversized_ranges() {
    assert!(ArithTables::build(1).is_err());
    assert!(matches!(ArithTables::build_with_budget(1_000_000, 1_000), Err(Error::Capacity(_))));
}

#[test]
fn phi2_values() {
    assert_eq!(phi2(1).unwrap(), 1);
    assert_eq!(phi2(15).unwrap(), 3);
    assert_eq!(phi2(2).unwrap(), 0);
    assert!(phi2(12).is_err());
}

#[test]
fn squarefree_kernels() {
    assert_eq!(squarefree_kernel(12).unwrap().value, 6);
    assert_eq!(squarefree_kernel(-7).unwrap().value, 7);
    assert_eq!(squarefree_kernel(360).unwrap().value, 30);
    assert!(squarefree_kernel(0).is_err());
}

#[test]
fn progression_sums() {
    let t = ArithTables::build(100).unwrap();
    let odd = t.psi_ap(10, 2, 1).unwrap();
    let expect = 2.0 * 3f64.ln() + 5f64.ln() + 7f64.ln();
    assert!(close(odd, expect, 1e-12));
    assert!(close(odd, 5.7520, 1e-3));
    assert!(close(t.psi_ap(10, 4, 2).unwrap(), 2f64.ln(), 1e-12));
    for x in [1, 10, 57, 100] {
        assert!(close(t.error_in_ap(x, 1, 0).unwrap(), t.psi(x) - x as f64, 1e-12));
    }
}

#[test]
fn bombieri_vinogradov_sum() {
    let t = ArithTables::build(1_000_000).unwrap();
    let x = 100_000i64;
    assert!(close(t.bv_sum(x, 1).unwrap(), (t.psi(x) - x as f64).abs(), 1e-9));
    let a = t.bv_sum(x, 10).unwrap();
    let b = t.bv_sum(x, 10).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    for x in [100_000i64, 1_000_000] {
        let q = (x as f64).powf(0.4) as u64;
        let ratio = t.bv_sum(x, q).unwrap() / (x as f64 / (x as f64).ln().powi(4));
        println!("x = {x}, Q = {q}: sum/(x/log⁴x) = {ratio:.2}");
        assert!(ratio.is_finite() && ratio > 0.0);
    }
}

#[test]
fn tables_match_trial_division() {
    let t = ArithTables::build(20_000).unwrap();
    for n in 1..=20_000u64 {
        assert_eq!(t.mu(n) as i64, factor::mobius(n), "mu({n})");
        assert_eq!(t.phi(n), factor::euler_phi(n), "phi({n})");
        assert_eq!(t.num_div(n), factor::num_divisors(n), "d({n})");
        assert_eq!(t.sigma(n), factor::sigma(n), "sigma({n})");
    }
}

#[test]
fn sigma_over_phi_partial_sums_are_linear() {
    let t = ArithTables::build(100_000).unwrap();
    let mut acc = 0.0;
    let mut worst = 0.0f64;
    for r in 1..=100_000u64 {
        if t.mu(r) != 0 {
            acc += t.sigma(r) as f64 / t.phi(r) as f64;
        }
        if r >= 100 {
            worst = worst.max(acc / r as f64);
        }
    }
    println!("max over R of Σ μ²σ/φ / R = {worst:.4}");
    assert!(worst < 3.0);
}

#[test]
fn cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let built = ArithTables::load_or_build(dir.path(), 5_000).unwrap();
    let loaded = ArithTables::load_or_build(dir.path(), 5_000).unwrap();
    assert_eq!(built.mu_slice(), loaded.mu_slice());
    assert_eq!(built.phi_slice(), loaded.phi_slice());
    assert_eq!(built.psi(5_000).to_bits(), loaded.psi(5_000).to_bits());
}
