//! Truncated divisor-sum approximations to the von Mangoldt function.
//!
//! `λ_R(n) = Σ_{r≤R} μ²(r)/φ(r) Σ_{d|(r,n)} d μ(d)` is evaluated either
//! directly from that double sum or through divisor weights
//! `y_d = d μ(d) Σ_{r≤R, d|r} μ²(r)/φ(r)`, so that `λ_R(n) = Σ_{d|n, d≤R} y_d`.
//! The weight form turns a range of `n` into one sieve pass.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::arith::ArithTables;
use crate::constants::EULER_GAMMA;
use crate::error::{Error, Result};
use crate::factor;
use crate::numeric::{LogCombination, NeumaierSum};

/// Largest truncation level accepted for a weight table.
pub const MAX_WEIGHT_LEVEL: u64 = 20_000_000;

/// Largest level for which exact weights are built.
pub const MAX_EXACT_LEVEL: u64 = 20_000;

const SEGMENT: usize = 1 << 16;

/// A real truncation level `R ≥ 1`.
///
/// Divisor ranges run over `d ≤ ⌊R⌋`; predicted main terms use `log R` of the
/// real value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    real: f64,
}

impl Truncation {
    pub fn new(real: f64) -> Result<Self> {
        if !(real >= 1.0) || !real.is_finite() {
            return Err(Error::Precondition(format!("truncation level must be ≥ 1, got {real}")));
        }
        Ok(Self { real })
    }

    pub fn integer(r: u64) -> Self {
        Self { real: r.max(1) as f64 }
    }

    /// `R = N^θ`.
    pub fn power(n: u64, theta: f64) -> Result<Self> {
        Self::new((n as f64).powf(theta))
    }

    pub fn real(&self) -> f64 {
        self.real
    }

    /// `⌊R⌋`, snapping values that are within rounding of an integer.
    pub fn level(&self) -> u64 {
        let nearest = self.real.round();
        if (self.real - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as u64
        } else {
            self.real.floor() as u64
        }
    }

    pub fn log(&self) -> f64 {
        self.real.ln()
    }
}

/// Exact weights over the common denominator `D = lcm{φ(r) : r ≤ R, μ(r) ≠ 0}`.
#[derive(Clone, Debug)]
pub struct ExactWeights {
    pub denominator: BigInt,
    /// `D·y_d` for each entry of [`ApproximantWeights::divisors`].
    pub numerators: Vec<BigInt>,
}

#[derive(Clone, Debug)]
pub struct ApproximantWeights {
    level: u64,
    divisors: Vec<u64>,
    float: Vec<f64>,
    exact: Option<ExactWeights>,
}

struct SmallSieve {
    spf: Vec<u32>,
    mu: Vec<i8>,
    phi: Vec<u32>,
}

impl SmallSieve {
    fn new(r: u64) -> Result<Self> {
        let t = ArithTables::build(r.max(2))?;
        Ok(Self {
            spf: t.spf_slice().to_vec(),
            mu: t.mu_slice().to_vec(),
            phi: t.phi_slice().to_vec(),
        })
    }

    fn squarefree_divisors(&self, mut r: u64, out: &mut Vec<u64>) {
        out.clear();
        out.push(1);
        while r > 1 {
            let p = self.spf[r as usize] as u64;
            r /= p;
            let len = out.len();
            for i in 0..len {
                out.push(out[i] * p);
            }
        }
    }
}

impl ApproximantWeights {
    /// Floating point weights.
    pub fn new(level: u64) -> Result<Self> {
        Self::build(level, false)
    }

    /// Exact and floating point weights.
    pub fn new_exact(level: u64) -> Result<Self> {
        if level > MAX_EXACT_LEVEL {
            return Err(Error::Capacity(format!(
                "exact weights limited to R ≤ {MAX_EXACT_LEVEL}, got {level}"
            )));
        }
        Self::build(level, true)
    }

    fn build(level: u64, exact: bool) -> Result<Self> {
        if level == 0 {
            return Err(Error::Precondition("truncation level must be ≥ 1".into()));
        }
        if level > MAX_WEIGHT_LEVEL {
            return Err(Error::Capacity(format!(
                "weight table limited to R ≤ {MAX_WEIGHT_LEVEL}, got {level}"
            )));
        }
        let sv = SmallSieve::new(level)?;
        let len = level as usize + 1;
        let mut index = vec![u32::MAX; len];
        let mut divisors = Vec::new();
        for d in 1..len {
            if sv.mu[d] != 0 {
                index[d] = divisors.len() as u32;
                divisors.push(d as u64);
            }
        }

        let mut acc = vec![NeumaierSum::new(); divisors.len()];
        let mut ds = Vec::new();
        for &r in &divisors {
            let inv = 1.0 / sv.phi[r as usize] as f64;
            sv.squarefree_divisors(r, &mut ds);
            for &d in &ds {
                acc[index[d as usize] as usize].add(inv);
            }
        }
        let float = divisors
            .iter()
            .zip(&acc)
            .map(|(&d, s)| d as f64 * sv.mu[d as usize] as f64 * s.value())
            .collect();

        let exact = exact.then(|| {
            let denominator = divisors
                .iter()
                .fold(BigInt::one(), |l, &r| num_integer::lcm(l, BigInt::from(sv.phi[r as usize])));
            let mut sums = vec![BigInt::zero(); divisors.len()];
            for &r in &divisors {
                let q = &denominator / BigInt::from(sv.phi[r as usize]);
                sv.squarefree_divisors(r, &mut ds);
                for &d in &ds {
                    sums[index[d as usize] as usize] += &q;
                }
            }
            let numerators = divisors
                .iter()
                .zip(sums)
                .map(|(&d, s)| s * BigInt::from(d as i64 * sv.mu[d as usize] as i64))
                .collect();
            ExactWeights { denominator, numerators }
        });

        Ok(Self { level, divisors, float, exact })
    }

    pub fn level(&self) -> u64 {
        self.level
    }

    /// Squarefree `d ≤ R`, increasing.
    pub fn divisors(&self) -> &[u64] {
        &self.divisors
    }

    pub fn len(&self) -> usize {
        self.divisors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.divisors.is_empty()
    }

    pub fn float_weights(&self) -> &[f64] {
        &self.float
    }

    pub fn exact(&self) -> Option<&ExactWeights> {
        self.exact.as_ref()
    }

    fn exact_or_err(&self) -> Result<&ExactWeights> {
        self.exact
            .as_ref()
            .ok_or_else(|| Error::Precondition("weights were built without exact mode".into()))
    }

    /// `y_d` as an exact rational; zero for `d` that is not a squarefree `d ≤ R`.
    pub fn weight(&self, d: u64) -> Result<BigRational> {
        let ex = self.exact_or_err()?;
        Ok(match self.divisors.binary_search(&d) {
            Ok(i) => BigRational::new(ex.numerators[i].clone(), ex.denominator.clone()),
            Err(_) => BigRational::zero(),
        })
    }

    pub fn weight_f64(&self, d: u64) -> f64 {
        match self.divisors.binary_search(&d) {
            Ok(i) => self.float[i],
            Err(_) => 0.0,
        }
    }

    /// `λ_R(n)` for one `n` by summing weights over divisors of `n`.
    pub fn eval_f64(&self, n: i64) -> f64 {
        if n <= 0 {
            return 0.0;
        }
        let mut acc = NeumaierSum::new();
        for d in factor::squarefree_divisors(n as u64) {
            if d <= self.level {
                acc.add(self.weight_f64(d));
            }
        }
        acc.value()
    }

    /// `λ_R(n)` for `n ∈ [lo, hi]` (zero for `n ≤ 0`) in one sieve pass.
    ///
    /// For each `n` the weights are added in increasing `d`, independent of
    /// how the range is segmented.
    pub fn range_f64(&self, lo: i64, hi: i64) -> Vec<f64> {
        self.sieve_range(lo, hi, |i| self.float[i], 0.0, |acc: &mut f64, w| *acc += w)
    }

    /// `D·λ_R(n)` for `n ∈ [lo, hi]`, exact integers over the common denominator.
    pub fn range_scaled(&self, lo: i64, hi: i64) -> Result<Vec<BigInt>> {
        let ex = self.exact_or_err()?;
        Ok(self.sieve_range(
            lo,
            hi,
            |i| ex.numerators[i].clone(),
            BigInt::zero(),
            |acc: &mut BigInt, w| *acc += w,
        ))
    }

    /// `λ_R(n)` for `n ∈ [lo, hi]` as exact rationals.
    pub fn range_exact(&self, lo: i64, hi: i64) -> Result<Vec<BigRational>> {
        let den = self.exact_or_err()?.denominator.clone();
        Ok(self
            .range_scaled(lo, hi)?
            .into_iter()
            .map(|v| BigRational::new(v, den.clone()))
            .collect())
    }

    fn sieve_range<T, W, A>(&self, lo: i64, hi: i64, weight: W, zero: T, add: A) -> Vec<T>
    where
        T: Clone + Send + Sync,
        W: Fn(usize) -> T + Sync,
        A: Fn(&mut T, T) + Sync,
    {
        if hi < lo {
            return Vec::new();
        }
        let len = (hi - lo + 1) as usize;
        let segments = len.div_ceil(SEGMENT);
        let parts: Vec<Vec<T>> = (0..segments)
            .into_par_iter()
            .map(|s| {
                let a = lo + (s * SEGMENT) as i64;
                let b = (a + SEGMENT as i64 - 1).min(hi);
                let mut out = vec![zero.clone(); (b - a + 1) as usize];
                let start = a.max(1);
                if start <= b {
                    for (i, &d) in self.divisors.iter().enumerate() {
                        let d = d as i64;
                        let w = weight(i);
                        let mut m = (start + d - 1) / d * d;
                        while m <= b {
                            add(&mut out[(m - a) as usize], w.clone());
                            m += d;
                        }
                    }
                }
                out
            })
            .collect();
        parts.into_iter().flatten().collect()
    }
}

/// `λ_R(n)` straight from the double sum over `r ≤ R` and `d | (r, n)`.
pub fn lambda_r_direct(n: i64, r_level: u64) -> BigRational {
    if n <= 0 {
        return BigRational::zero();
    }
    let mut total = BigRational::zero();
    for r in 1..=r_level {
        let mu = factor::mobius(r);
        if mu == 0 {
            continue;
        }
        let g = factor::gcd(r as i64, n);
        let inner: i64 = factor::squarefree_divisors(g)
            .into_iter()
            .map(|d| d as i64 * factor::mobius(d))
            .sum();
        if inner != 0 {
            total += BigRational::new(BigInt::from(inner), BigInt::from(factor::euler_phi(r)));
        }
    }
    total
}

/// `Λ_R(n) = Σ_{d|n, d≤R} μ(d) log(R/d)`; zero for `n ≤ 0`.
pub fn biglambda_r(n: i64, r: Truncation) -> f64 {
    if n <= 0 {
        return 0.0;
    }
    let lr = r.log();
    let mut acc = NeumaierSum::new();
    for d in factor::squarefree_divisors(n as u64) {
        if d <= r.level() {
            acc.add(factor::mobius(d) as f64 * (lr - (d as f64).ln()));
        }
    }
    acc.value()
}

/// `Λ_R(n)` as `c·log R + Σ c_p log p` with integer coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BigLambdaExact {
    pub log_r_coeff: i64,
    pub logs: LogCombination,
}

impl BigLambdaExact {
    pub fn eval(&self, r: Truncation) -> f64 {
        self.log_r_coeff as f64 * r.log() + self.logs.eval()
    }
}

pub fn biglambda_r_exact(n: i64, r: Truncation) -> BigLambdaExact {
    let mut out = BigLambdaExact::default();
    if n <= 0 {
        return out;
    }
    for d in factor::squarefree_divisors(n as u64) {
        if d > r.level() {
            continue;
        }
        let mu = factor::mobius(d);
        out.log_r_coeff += mu;
        for p in factor::distinct_primes(d) {
            out.logs.add_term(p, -(mu as i128));
        }
    }
    out
}

/// `ψ_R(x) = Σ_{n≤x} λ_R(n)`.
pub fn psi_r(x: i64, weights: &ApproximantWeights) -> f64 {
    if x < 1 {
        return 0.0;
    }
    weights.range_f64(1, x).into_iter().collect::<NeumaierSum>().value()
}

/// Prefix sums `ψ_R(n)` for `n ∈ [0, x]`.
pub fn psi_r_prefix(x: i64, weights: &ApproximantWeights) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.max(0) as usize + 1);
    out.push(0.0);
    if x >= 1 {
        let mut acc = NeumaierSum::new();
        for v in weights.range_f64(1, x) {
            acc.add(v);
            out.push(acc.value());
        }
    }
    out
}

/// `𝓛_k(R) = Σ_{r≤R, (r,k)=1} μ²(r)/φ(r)` exactly.
pub fn script_l(r_level: u64, k: u64) -> BigRational {
    let terms: Vec<u64> = (1..=r_level)
        .filter(|&r| factor::is_squarefree(r) && factor::gcd(r as i64, k as i64) == 1)
        .collect();
    let den = terms
        .iter()
        .fold(BigInt::one(), |l, &r| num_integer::lcm(l, BigInt::from(factor::euler_phi(r))));
    let num: BigInt = terms
        .iter()
        .map(|&r| &den / BigInt::from(factor::euler_phi(r)))
        .sum();
    BigRational::new(num, den)
}

/// `𝓛_k(x)` in floating point for every `x ≤ x_max`, as a prefix array.
pub fn script_l_prefix(tables: &ArithTables, x_max: u64, k: u64) -> Result<Vec<f64>> {
    if x_max > tables.n_max() {
        return Err(Error::Range(format!("{x_max} exceeds table bound {}", tables.n_max())));
    }
    let mut out = Vec::with_capacity(x_max as usize + 1);
    out.push(0.0);
    let mut acc = NeumaierSum::new();
    for r in 1..=x_max {
        if tables.mu(r) != 0 && factor::gcd(r as i64, k as i64) == 1 {
            acc.add(1.0 / tables.phi(r) as f64);
        }
        out.push(acc.value());
    }
    Ok(out)
}

/// Asymptotic main term of `𝓛_k(R)`:
/// `(φ(k)/k)(log R + γ + Σ_p log p/(p(p−1)) + Σ_{p|k} log p/p)`.
///
/// Evaluated through the general multiplicative-sum main term with the
/// polynomial pair `(1, X − 1)`, so both routes give identical bits.
pub fn hildebrand_main(r: f64, k: u64) -> f64 {
    crate::lemmas::hildebrand_main_term(r, k)
}

/// The same main term written out directly, for cross-checks.
pub fn hildebrand_main_explicit(r: f64, k: u64) -> f64 {
    let primes = factor::distinct_primes(k);
    let ratio = primes.iter().fold(1.0, |acc, &p| acc * (1.0 - 1.0 / p as f64));
    let local: f64 = primes.iter().map(|&p| (p as f64).ln() / p as f64).sum();
    ratio * (r.ln() + EULER_GAMMA + crate::constants::hildebrand_prime_sum().value + local)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rat;

    #[test]
    fn direct_small_values() {
        for n in 1..20 {
            assert_eq!(lambda_r_direct(n, 1), rat(1, 1));
        }
        assert_eq!(lambda_r_direct(3, 2), rat(2, 1));
        assert_eq!(lambda_r_direct(4, 2), rat(0, 1));
        assert_eq!(lambda_r_direct(0, 5), rat(0, 1));
        assert_eq!(lambda_r_direct(-3, 5), rat(0, 1));
        for r in [1, 5, 17, 30] {
            assert_eq!(lambda_r_direct(1, r), script_l(r, 1));
        }
    }

    #[test]
    fn script_l_values() {
        assert_eq!(script_l(1, 1), rat(1, 1));
        // odd squarefree r ≤ 10: 1, 3, 5, 7
        assert_eq!(script_l(10, 2), rat(23, 12));
    }

    #[test]
    fn weights_match_direct_exactly() {
        for r in [1u64, 2, 3, 5, 10, 50] {
            let w = ApproximantWeights::new_exact(r).unwrap();
            assert_eq!(w.weight(1).unwrap(), script_l(r, 1));
            let vals = w.range_exact(1, 2000).unwrap();
            for (i, v) in vals.iter().enumerate() {
                let n = i as i64 + 1;
                assert_eq!(*v, lambda_r_direct(n, r), "n={n} R={r}");
            }
            let fl = w.range_f64(1, 2000);
            for (v, f) in vals.iter().zip(&fl) {
                let e = crate::numeric::rational_to_f64(v);
                assert!((e - f).abs() <= 1e-10 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn range_handles_nonpositive_and_segments() {
        let w = ApproximantWeights::new(30).unwrap();
        let v = w.range_f64(-3, 2);
        assert_eq!(&v[..4], &[0.0, 0.0, 0.0, 0.0]);
        let long = w.range_f64(1, 200_000);
        let tail = w.range_f64(150_000, 200_000);
        assert_eq!(&long[149_999..], &tail[..]);
        for n in [1i64, 97, 65_536, 65_537, 199_999] {
            assert!((long[n as usize - 1] - w.eval_f64(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn biglambda_values() {
        let r = Truncation::integer(30);
        assert!((biglambda_r(1, r) - 30f64.ln()).abs() < 1e-14);
        assert!((biglambda_r(2, Truncation::integer(2)) - 2f64.ln()).abs() < 1e-15);
        for p in [2i64, 3, 5, 7, 11, 13, 17, 19, 23, 29] {
            assert!((biglambda_r(p, r) - (p as f64).ln()).abs() < 1e-13);
            let ex = biglambda_r_exact(p, r);
            assert_eq!(ex.log_r_coeff, 0);
            assert_eq!(ex.logs.coefficient(p as u64), 1);
        }
        assert_eq!(biglambda_r(0, r), 0.0);
    }

    #[test]
    fn truncation_snaps_to_integers() {
        assert_eq!(Truncation::power(100_000, 0.2).unwrap().level(), 10);
        assert_eq!(Truncation::power(1_000_000, 0.25).unwrap().level(), 31);
        assert_eq!(Truncation::power(1_000_000, 0.5).unwrap().level(), 1000);
        assert!(Truncation::new(0.5).is_err());
    }

    #[test]
    fn psi_r_small() {
        let w = ApproximantWeights::new(10).unwrap();
        assert_eq!(psi_r(0, &w), 0.0);
        let pre = psi_r_prefix(500, &w);
        assert!((pre[500] - psi_r(500, &w)).abs() < 1e-12);
    }

    #[test]
    fn hildebrand_forms_agree() {
        for k in [1u64, 2, 6, 30] {
            let a = hildebrand_main(1e5, k);
            let b = hildebrand_main_explicit(1e5, k);
            assert!((a - b).abs() < 1e-12, "k={k}");
        }
    }
}
