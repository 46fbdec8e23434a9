//! Correlations of shifted `λ_R` values, optionally with one von Mangoldt
//! factor, and the Möbius kernels behind their main terms.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Pow, Zero};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::approximants::{ApproximantWeights, Truncation};
use crate::arith::{phi2, ArithTables};
use crate::error::{Error, Result};
use crate::factor;
use crate::numeric::{chunked_total, rational_to_f64, Sample};
use crate::singular::{singular_vector, ShiftPattern};

/// Which block of `n` a range sum runs over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeMode {
    /// `1 ≤ n ≤ N`
    #[default]
    Standard,
    /// `N < n ≤ 2N`
    Primed,
}

impl RangeMode {
    pub fn bounds(self, n: u64) -> (i64, i64) {
        match self {
            RangeMode::Standard => (1, n as i64),
            RangeMode::Primed => (n as i64 + 1, 2 * n as i64),
        }
    }
}

/// Leading constants `𝒞_k(𝒂)` for `k ≤ 3`, keyed by the decreasing partition.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionConstants {
    pub table: BTreeMap<Vec<u32>, Rational64>,
    /// Level-of-distribution exponent; recorded for range documentation only.
    pub theta: f64,
}

impl Default for PredictionConstants {
    fn default() -> Self {
        Self::with_theta(0.5)
    }
}

impl PredictionConstants {
    pub fn with_theta(theta: f64) -> Self {
        let one = Rational64::one();
        let table = BTreeMap::from([
            (vec![1], one),
            (vec![2], one),
            (vec![1, 1], one),
            (vec![3], Rational64::new(3, 4)),
            (vec![2, 1], one),
            (vec![1, 1, 1], one),
        ]);
        Self { table, theta }
    }

    pub fn constant(&self, pattern: &ShiftPattern) -> Option<f64> {
        self.table
            .get(&pattern.partition())
            .map(|c| *c.numer() as f64 / *c.denom() as f64)
    }

    /// Largest admissible `R` exponent `ϑ/(k−1)` for a mixed correlation.
    pub fn mixed_range_exponent(&self, k: u32) -> Option<f64> {
        (k >= 2).then(|| self.theta / (k - 1) as f64)
    }
}

fn ser_opt_rational<S: Serializer>(v: &Option<BigRational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(q) => s.serialize_some(&q.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationResult {
    pub pattern: ShiftPattern,
    pub n: u64,
    pub r: f64,
    pub r_level: u64,
    pub mode: RangeMode,
    pub mixed: bool,
    pub computed: f64,
    #[serde(serialize_with = "ser_opt_rational")]
    pub exact: Option<BigRational>,
    pub predicted_main: Option<f64>,
    pub residual: Option<f64>,
    pub normalized_residual: Option<f64>,
}

impl CorrelationResult {
    fn new(
        pattern: &ShiftPattern,
        n: u64,
        r: Truncation,
        mode: RangeMode,
        mixed: bool,
        computed: f64,
        predicted_main: Option<f64>,
    ) -> Self {
        Self {
            pattern: pattern.clone(),
            n,
            r: r.real(),
            r_level: r.level(),
            mode,
            mixed,
            computed,
            exact: None,
            predicted_main,
            residual: predicted_main.map(|p| computed - p),
            normalized_residual: predicted_main.map(|p| computed / p - 1.0),
        }
    }
}

/// Values of an arithmetic function on a contiguous block of integers.
#[derive(Clone, Debug)]
pub struct Window<T> {
    lo: i64,
    values: Vec<T>,
}

impl<T: Clone> Window<T> {
    pub fn new(lo: i64, values: Vec<T>) -> Self {
        Self { lo, values }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Panics outside the block.
    #[inline]
    pub fn at(&self, m: i64) -> &T {
        &self.values[(m - self.lo) as usize]
    }
}

/// `λ_R(m)` for `m ∈ [lo, hi]` in floating point.
pub fn lambda_r_window(weights: &ApproximantWeights, lo: i64, hi: i64) -> Window<f64> {
    Window::new(lo, weights.range_f64(lo, hi))
}

/// `D·λ_R(m)` for `m ∈ [lo, hi]`, `D` the weights' common denominator.
pub fn lambda_r_window_scaled(weights: &ApproximantWeights, lo: i64, hi: i64) -> Result<Window<BigInt>> {
    Ok(Window::new(lo, weights.range_scaled(lo, hi)?))
}

/// `Λ(m)` for `m ∈ [lo, hi]`, zero for `m ≤ 1`.
pub fn von_mangoldt_window(tables: &ArithTables, lo: i64, hi: i64) -> Result<Window<f64>> {
    check_table(tables, hi)?;
    let values = (lo..=hi)
        .map(|m| if m >= 1 { tables.lambda(m as u64) } else { 0.0 })
        .collect();
    Ok(Window::new(lo, values))
}

fn check_table(tables: &ArithTables, hi: i64) -> Result<()> {
    if hi > tables.n_max() as i64 {
        return Err(Error::Range(format!("argument {hi} exceeds table bound {}", tables.n_max())));
    }
    Ok(())
}

fn shift_span(shifts: &[i64]) -> (i64, i64) {
    let lo = *shifts.iter().min().unwrap();
    let hi = *shifts.iter().max().unwrap();
    (lo, hi)
}

/// `Σ_{n∈[lo,hi]} Π_i f_i(n + j_i)^{a_i}` where each factor reads its own window.
pub fn product_sum<T: Sample>(lo: i64, hi: i64, factors: &[(&Window<T>, i64, u32)]) -> T {
    chunked_total(lo, hi + 1, |n| {
        let mut acc = T::one();
        for &(w, j, a) in factors {
            acc = acc * w.at(n + j).powu(a);
        }
        acc
    })
}

fn predicted(pattern: &ShiftPattern, n: u64, r: Truncation, constant: Option<f64>) -> Result<Option<f64>> {
    let Some(c) = constant else { return Ok(None) };
    let s = if pattern.r() == 1 { 1.0 } else { singular_vector(pattern.shifts())?.value };
    let e = pattern.k() as i32 - pattern.r() as i32;
    Ok(Some(c * s * n as f64 * r.log().powi(e)))
}

/// `𝒮_k(N, 𝒋, 𝒂) = Σ_n Π λ_R(n + j_i)^{a_i}` in floating point.
///
/// The prediction `𝒞_k(𝒂)𝔖(𝒋)N(log R)^{k−r}` is attached for `k ≤ 3` and
/// omitted otherwise.
pub fn s_k(
    tables: &ArithTables,
    n: u64,
    pattern: &ShiftPattern,
    r: Truncation,
    mode: RangeMode,
) -> Result<CorrelationResult> {
    let weights = ApproximantWeights::new(r.level())?;
    s_k_with(tables, &weights, n, pattern, r, mode)
}

pub fn s_k_with(
    tables: &ArithTables,
    weights: &ApproximantWeights,
    n: u64,
    pattern: &ShiftPattern,
    r: Truncation,
    mode: RangeMode,
) -> Result<CorrelationResult> {
    check_level(weights, r)?;
    let (lo, hi) = mode.bounds(n);
    let (jmin, jmax) = shift_span(pattern.shifts());
    check_table(tables, hi + jmax)?;
    let w = lambda_r_window(weights, lo + jmin, hi + jmax);
    let factors: Vec<_> = pattern
        .shifts()
        .iter()
        .zip(pattern.multiplicities())
        .map(|(&j, &a)| (&w, j, a))
        .collect();
    let computed = product_sum(lo, hi, &factors);
    let c = PredictionConstants::default().constant(pattern);
    let pred = predicted(pattern, n, r, c)?;
    Ok(CorrelationResult::new(pattern, n, r, mode, false, computed, pred))
}

fn check_level(weights: &ApproximantWeights, r: Truncation) -> Result<()> {
    if weights.level() != r.level() {
        return Err(Error::Precondition(format!(
            "weights built for R = {} but truncation has level {}",
            weights.level(),
            r.level()
        )));
    }
    Ok(())
}

/// `𝒮_k` as an exact rational, from weights built in exact mode.
pub fn s_k_exact(weights: &ApproximantWeights, n: u64, pattern: &ShiftPattern, mode: RangeMode) -> Result<BigRational> {
    let den = weights
        .exact()
        .ok_or_else(|| Error::Precondition("weights were built without exact mode".into()))?
        .denominator
        .clone();
    let (lo, hi) = mode.bounds(n);
    let (jmin, jmax) = shift_span(pattern.shifts());
    let w = lambda_r_window_scaled(weights, lo + jmin, hi + jmax)?;
    let factors: Vec<_> = pattern
        .shifts()
        .iter()
        .zip(pattern.multiplicities())
        .map(|(&j, &a)| (&w, j, a))
        .collect();
    let total: BigInt = product_sum(lo, hi, &factors);
    Ok(BigRational::new(total, Pow::pow(den, pattern.k())))
}

/// `𝒮_k` with both the exact and the floating point value filled in.
pub fn s_k_rational(
    tables: &ArithTables,
    n: u64,
    pattern: &ShiftPattern,
    r_level: u64,
    mode: RangeMode,
) -> Result<CorrelationResult> {
    let r = Truncation::integer(r_level);
    let weights = ApproximantWeights::new_exact(r_level)?;
    let exact = s_k_exact(&weights, n, pattern, mode)?;
    let mut out = s_k_with(tables, &weights, n, pattern, r, mode)?;
    out.computed = rational_to_f64(&exact);
    if let Some(p) = out.predicted_main {
        out.residual = Some(out.computed - p);
        out.normalized_residual = Some(out.computed / p - 1.0);
    }
    out.exact = Some(exact);
    Ok(out)
}

/// `𝒮̃_k`: the last shift carries `Λ` instead of `λ_R` and must have
/// multiplicity one. A single shift gives `Σ_n Λ(n + j)` with prediction `N`.
pub fn s_tilde_k(
    tables: &ArithTables,
    n: u64,
    pattern: &ShiftPattern,
    r: Truncation,
    mode: RangeMode,
) -> Result<CorrelationResult> {
    let weights = ApproximantWeights::new(r.level())?;
    s_tilde_k_with(tables, &weights, n, pattern, r, mode)
}

pub fn s_tilde_k_with(
    tables: &ArithTables,
    weights: &ApproximantWeights,
    n: u64,
    pattern: &ShiftPattern,
    r: Truncation,
    mode: RangeMode,
) -> Result<CorrelationResult> {
    check_level(weights, r)?;
    let last = pattern.r() - 1;
    if pattern.multiplicities()[last] != 1 {
        return Err(Error::Domain("the von Mangoldt slot must have multiplicity 1".into()));
    }
    let (lo, hi) = mode.bounds(n);
    let (jmin, jmax) = shift_span(pattern.shifts());
    check_table(tables, hi + jmax)?;
    let big = von_mangoldt_window(tables, lo + jmin, hi + jmax)?;
    let computed = if last == 0 {
        let j = pattern.shifts()[0];
        product_sum(lo, hi, &[(&big, j, 1)])
    } else {
        let w = lambda_r_window(weights, lo + jmin, hi + jmax);
        let mut factors: Vec<_> = pattern.shifts()[..last]
            .iter()
            .zip(pattern.multiplicities())
            .map(|(&j, &a)| (&w, j, a))
            .collect();
        factors.push((&big, pattern.shifts()[last], 1));
        product_sum(lo, hi, &factors)
    };
    let pred = predicted(pattern, n, r, (pattern.k() <= 3).then_some(1.0))?;
    Ok(CorrelationResult::new(pattern, n, r, mode, true, computed, pred))
}

/// `ψ_𝒋(N) = Σ_{n≤N} Π Λ(n + j_i)`.
pub fn psi_tuple(tables: &ArithTables, n: u64, shifts: &[i64]) -> Result<f64> {
    let pattern = ShiftPattern::simple(shifts.to_vec())?;
    let (jmin, jmax) = shift_span(pattern.shifts());
    let hi = n as i64;
    check_table(tables, hi + jmax)?;
    if shifts.len() == 1 {
        let j = shifts[0];
        return Ok(tables.psi(hi + j) - tables.psi(j));
    }
    let big = von_mangoldt_window(tables, 1 + jmin, hi + jmax)?;
    let factors: Vec<_> = shifts.iter().map(|&j| (&big, j, 1)).collect();
    Ok(product_sum(1, hi, &factors))
}

/// `N Σ_{r≤R} μ(r) μ((j,r)) φ((j,r)) / φ(r)²`, the pair correlation with each
/// divisor count replaced by its density.
pub fn s2_reduced(n: u64, j: i64, r_level: u64) -> BigRational {
    let mut den = BigInt::one();
    let mut terms = Vec::new();
    for r in 1..=r_level {
        let mu = factor::mobius(r);
        if mu == 0 {
            continue;
        }
        let g = factor::gcd(j, r as i64);
        let num = mu * factor::mobius(g) * factor::euler_phi(g) as i64;
        let phi = factor::euler_phi(r);
        let d = BigInt::from(phi) * BigInt::from(phi);
        den = num_integer::lcm(den, d.clone());
        terms.push((num, d));
    }
    let sum: BigInt = terms.iter().map(|(num, d)| BigInt::from(*num) * (&den / d)).sum();
    BigRational::new(sum * BigInt::from(n), den)
}

/// `(Σ_{r≤R} μ²(r)σ(r)/φ(r))²`: the total of `|y_d y_e|`, which bounds the
/// error from replacing each divisor count by its density.
pub fn rounding_bound(r_level: u64) -> BigRational {
    let mut s = BigRational::zero();
    for r in 1..=r_level {
        if factor::is_squarefree(r) {
            s += BigRational::new(BigInt::from(factor::sigma(r)), BigInt::from(factor::euler_phi(r)));
        }
    }
    &s * &s
}

fn divides(g: u64, j: i64) -> bool {
    j.unsigned_abs().is_multiple_of(g)
}

/// `Σ_{d|r1, e|r2, (d,e)|j} μ(d)μ(e)(d,e)` by enumeration.
pub fn pair_kernel_brute(r1: u64, r2: u64, j: i64) -> i64 {
    let mut s = 0;
    for d in factor::squarefree_divisors(r1) {
        for e in factor::squarefree_divisors(r2) {
            let g = factor::gcd(d as i64, e as i64);
            if divides(g, j) {
                s += factor::mobius(d) * factor::mobius(e) * g as i64;
            }
        }
    }
    s
}

/// Closed form of [`pair_kernel_brute`] for squarefree `r1, r2`:
/// zero off the diagonal, `μ(r)μ(g)φ(g)` with `g = (r, j)` on it.
pub fn pair_kernel_closed(r1: u64, r2: u64, j: i64) -> i64 {
    if r1 != r2 {
        return 0;
    }
    let g = factor::gcd(r1 as i64, j);
    factor::mobius(r1) * factor::mobius(g) * factor::euler_phi(g) as i64
}

/// `Σ μ(d)μ(e)μ(f) def/[d,e,f]` over `d, e, f | a` with `(d,e) | j1 − j2`,
/// `(d,f) | j1` and `(e,f) | j2`.
pub fn triple_kernel_brute(a: u64, j1: i64, j2: i64) -> i64 {
    let divs = factor::squarefree_divisors(a);
    let mut s = 0i64;
    for &d in &divs {
        for &e in &divs {
            if !divides(factor::gcd(d as i64, e as i64), j1 - j2) {
                continue;
            }
            for &f in &divs {
                if !divides(factor::gcd(d as i64, f as i64), j1) || !divides(factor::gcd(e as i64, f as i64), j2) {
                    continue;
                }
                let l = factor::lcm(factor::lcm(d, e), f);
                let sign = factor::mobius(d) * factor::mobius(e) * factor::mobius(f);
                s += sign * (d * e * f / l) as i64;
            }
        }
    }
    s
}

/// Closed form of [`triple_kernel_brute`] for squarefree `a`.
pub fn triple_kernel_closed(a: u64, j1: i64, j2: i64) -> Result<i64> {
    if !factor::is_squarefree(a) {
        return Err(Error::Domain(format!("{a} is not squarefree")));
    }
    let a_i = a as i64;
    let g12 = factor::gcd(factor::gcd(a_i, j1) as i64, j2);
    let g1 = factor::gcd(a_i, j1);
    let g2 = factor::gcd(a_i, j2) / g12;
    let g3 = {
        let d = factor::gcd(a_i, j1 - j2);
        d / factor::gcd(d as i64, j1.wrapping_mul(j2))
    };
    let mut v = factor::mobius(g12) * factor::euler_phi(g12) as i64;
    v *= phi2(g1)? * phi2(g2)? * phi2(g3)?;
    for p in factor::distinct_primes(a) {
        if divides(p, j1) || divides(p, j2) || divides(p, j1 - j2) {
            continue;
        }
        v *= -2;
    }
    Ok(v)
}

/// Squarefree integers in `[1, limit]`.
pub fn squarefree_up_to(limit: u64) -> Vec<u64> {
    (1..=limit).filter(|&r| factor::is_squarefree(r)).collect()
}

/// Grid cells where the pair kernel's closed form disagrees with enumeration.
pub fn pair_kernel_mismatches(r_max: u64, j_range: std::ops::RangeInclusive<i64>) -> Vec<(u64, u64, i64)> {
    let sq = squarefree_up_to(r_max);
    sq.par_iter()
        .flat_map_iter(|&r1| {
            let sq = &sq;
            let js = j_range.clone();
            sq.iter().flat_map(move |&r2| {
                js.clone()
                    .filter(move |&j| pair_kernel_brute(r1, r2, j) != pair_kernel_closed(r1, r2, j))
                    .map(move |j| (r1, r2, j))
            })
        })
        .collect()
}

/// Grid cells `j1 ≠ j2` where the triple kernel's closed form disagrees with
/// enumeration.
pub fn triple_kernel_mismatches(a_max: u64, j_range: std::ops::RangeInclusive<i64>) -> Result<Vec<(u64, i64, i64)>> {
    let sq = squarefree_up_to(a_max);
    let cells: Vec<(u64, i64, i64)> = sq
        .iter()
        .flat_map(|&a| {
            let js = j_range.clone();
            js.clone()
                .flat_map(move |j1| j_range_pairs(a, j1, js.clone()))
        })
        .collect();
    let checked: Vec<Option<(u64, i64, i64)>> = cells
        .par_iter()
        .map(|&(a, j1, j2)| {
            Ok((triple_kernel_closed(a, j1, j2)? != triple_kernel_brute(a, j1, j2)).then_some((a, j1, j2)))
        })
        .collect::<Result<_>>()?;
    Ok(checked.into_iter().flatten().collect())
}

fn j_range_pairs(a: u64, j1: i64, js: std::ops::RangeInclusive<i64>) -> impl Iterator<Item = (u64, i64, i64)> {
    js.filter(move |&j2| j2 != j1).map(move |j2| (a, j1, j2))
}
