//! Partial sums of squarefree-supported multiplicative functions compared
//! with their closed-form main terms.
//!
//! Each sum is evaluated on a ladder of `x` values from one sieve pass; the
//! matching main term is assembled from Euler products and prime sums
//! truncated at [`DEFAULT_LEMMA_P_CUT`] with estimated tails.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Mutex, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::constants::{
    prime_sum, primes_through, Decay, PrimeTruncation, DEFAULT_LEMMA_P_CUT, DEFAULT_SINGULAR_P_CUT,
    EULER_GAMMA,
};
use crate::error::{Error, Result};
use crate::factor;
use crate::numeric::NeumaierSum;
use crate::singular;

/// Largest ladder value accepted.
pub const MAX_LADDER_X: u64 = 200_000_000;

/// `m(k) = Π_{p|k} (1 + 1/√p)`.
pub fn m_of(k: i64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("m(k) needs k ≠ 0".into()));
    }
    Ok(factor::distinct_primes(k.unsigned_abs())
        .iter()
        .fold(1.0, |acc, &p| acc * (1.0 + 1.0 / (p as f64).sqrt())))
}

/// Values of a squarefree-supported multiplicative function on `[0, x_max]`.
///
/// `f(n) = Π_{p|n} g(p)` for squarefree `n`, else `0`; products are taken
/// from the largest prime factor down.
pub struct MultSieve {
    values: Vec<f64>,
}

impl MultSieve {
    pub fn new<G: Fn(u64) -> f64>(x_max: u64, g: G) -> Result<Self> {
        if x_max > MAX_LADDER_X {
            return Err(Error::Capacity(format!("x limited to {MAX_LADDER_X}, got {x_max}")));
        }
        let len = x_max as usize + 1;
        let mut spf = vec![0u32; len];
        let mut values = vec![0.0f64; len];
        let mut primes: Vec<u32> = Vec::new();
        if len > 1 {
            values[1] = 1.0;
        }
        for i in 2..len {
            if spf[i] == 0 {
                spf[i] = i as u32;
                values[i] = g(i as u64);
                primes.push(i as u32);
            }
            let si = spf[i];
            let vi = values[i];
            for &p in &primes {
                let ip = i * p as usize;
                if p > si || ip >= len {
                    break;
                }
                spf[ip] = p;
                values[ip] = if p == si { 0.0 } else { vi * g(p as u64) };
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Compensated partial sums of `weight(n)·f(n)` at each ladder point.
    pub fn ladder_sums<W: Fn(u64) -> f64>(&self, ladder: &[u64], weight: W) -> Vec<f64> {
        let mut out = Vec::with_capacity(ladder.len());
        let mut acc = NeumaierSum::new();
        let mut n = 1u64;
        for &x in ladder {
            while n <= x {
                let v = self.values[n as usize];
                if v != 0.0 {
                    acc.add(weight(n) * v);
                }
                n += 1;
            }
            out.push(acc.value());
        }
        out
    }
}

/// Naive partial sum of `weight(n)·Π_{p|n} g(p)` over squarefree `n ≤ x`,
/// factoring each `n` separately. Matches [`MultSieve`] bit for bit.
pub fn naive_sum<G: Fn(u64) -> f64, W: Fn(u64) -> f64>(x: u64, g: G, weight: W) -> f64 {
    let mut acc = NeumaierSum::new();
    for n in 1..=x {
        let f = factor::factorize(n);
        if f.iter().any(|&(_, e)| e > 1) {
            continue;
        }
        let mut v = 1.0;
        for (i, &(p, _)) in f.iter().rev().enumerate() {
            v = if i == 0 { g(p) } else { v * g(p) };
        }
        if v != 0.0 {
            acc.add(weight(n) * v);
        }
    }
    acc.value()
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub lemma: u8,
    pub params: serde_json::Value,
    pub x_ladder: Vec<u64>,
    pub lhs: Vec<f64>,
    pub main: Vec<f64>,
    pub scaled_error: Vec<f64>,
    pub observations: BTreeMap<String, f64>,
}

impl LemmaReport {
    /// Ratio of the top rung's scaled error to the bottom rung's.
    pub fn growth(&self) -> f64 {
        self.scaled_error.last().unwrap() / self.scaled_error[0]
    }
}

fn check_ladder(ladder: &[u64]) -> Result<u64> {
    if ladder.is_empty() {
        return Err(Error::Precondition("ladder is empty".into()));
    }
    if ladder[0] < 1 || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("ladder must be strictly increasing and ≥ 1".into()));
    }
    let top = *ladder.last().unwrap();
    if top > MAX_LADDER_X {
        return Err(Error::Capacity(format!("ladder top {top} exceeds {MAX_LADDER_X}")));
    }
    Ok(top)
}

/// Integer polynomial, coefficients from the constant term up.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Poly(pub Vec<i64>);

impl Poly {
    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn is_monic(&self) -> bool {
        self.0.last() == Some(&1)
    }

    pub fn eval(&self, x: u64) -> i128 {
        self.0.iter().rev().fold(0i128, |acc, &c| acc * x as i128 + c as i128)
    }
}

/// Monic `P1, P2` with `deg P2 = deg P1 + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct MonicPolyPair {
    pub p1: Poly,
    pub p2: Poly,
    /// Primes up to this bound were checked to have `P2(p) ≠ 0` and `P1(p) + P2(p) ≠ 0`.
    pub checked_to: u64,
}

impl MonicPolyPair {
    pub fn new(p1: Vec<i64>, p2: Vec<i64>, check_limit: u64) -> Result<Self> {
        let (p1, p2) = (Poly(p1), Poly(p2));
        if !p1.is_monic() || !p2.is_monic() {
            return Err(Error::Domain("polynomials must be monic".into()));
        }
        if p2.degree() != p1.degree() + 1 {
            return Err(Error::Domain("need deg P2 = deg P1 + 1".into()));
        }
        for &p in primes_through(check_limit).iter() {
            let p = p as u64;
            let b = p2.eval(p);
            if b == 0 {
                return Err(Error::Domain(format!("P2 vanishes at the prime {p}")));
            }
            if p1.eval(p) + b == 0 {
                return Err(Error::Domain(format!("P1 + P2 vanishes at the prime {p}")));
            }
        }
        Ok(Self { p1, p2, checked_to: check_limit })
    }

    /// `(1, X − 1)`: the sum becomes `𝓛_k(x)`.
    pub fn hildebrand() -> Self {
        Self::new(vec![1], vec![-1, 1], DEFAULT_LEMMA_P_CUT).expect("valid pair")
    }

    /// `(X² − X − 1, (X − 1)³)`.
    pub fn cubic() -> Self {
        Self::new(vec![-1, -1, 1], vec![-1, 3, -3, 1], DEFAULT_LEMMA_P_CUT).expect("valid pair")
    }

    fn ratio(&self, p: u64) -> f64 {
        self.p1.eval(p) as f64 / self.p2.eval(p) as f64
    }
}

/// The two prime-indexed constants of the general main term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lemma1Constants {
    pub product: PrimeTruncation,
    pub prime_log_sum: PrimeTruncation,
}

fn lemma1_constants(pair: &MonicPolyPair) -> Lemma1Constants {
    static CACHE: OnceLock<Mutex<HashMap<(Poly, Poly), Lemma1Constants>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (pair.p1.clone(), pair.p2.clone());
    if let Some(c) = cache.lock().unwrap().get(&key) {
        return *c;
    }
    let p_cut = DEFAULT_LEMMA_P_CUT;
    let logs = prime_sum(
        p_cut,
        |p| {
            let (a, b) = (pair.p1.eval(p), pair.p2.eval(p));
            let num = (p as i128 - 1) * a - b;
            let den = p as i128 * b;
            (num as f64 / den as f64).ln_1p()
        },
        Decay::INVERSE_SQUARE,
    );
    let product = PrimeTruncation { value: logs.value.exp(), tail: logs.tail, p_cut };
    let prime_log_sum = prime_sum(
        p_cut,
        |p| {
            let (a, b) = (pair.p1.eval(p), pair.p2.eval(p));
            let num = b - (p as i128 - 2) * a;
            let den = (p as i128 - 1) * (a + b);
            num as f64 / den as f64 * (p as f64).ln()
        },
        Decay::LOG_OVER_SQUARE,
    );
    let c = Lemma1Constants { product, prime_log_sum };
    cache.lock().unwrap().insert(key, c);
    c
}

/// Main term of the general squarefree sum for `(P1, P2)` coprime to `k`.
pub fn lemma1_main(pair: &MonicPolyPair, x: f64, k: u64) -> f64 {
    let c = lemma1_constants(pair);
    let mut local_factor = 1.0;
    let mut local_sum = 0.0;
    for p in factor::distinct_primes(k) {
        let (a, b) = (pair.p1.eval(p) as f64, pair.p2.eval(p) as f64);
        local_factor *= b / (a + b);
        local_sum += a * (p as f64).ln() / (a + b);
    }
    c.product.value * local_factor * (x.ln() + EULER_GAMMA + c.prime_log_sum.value + local_sum)
}

/// The Hildebrand main term, i.e. [`lemma1_main`] for the pair `(1, X − 1)`.
pub fn hildebrand_main_term(x: f64, k: u64) -> f64 {
    static PAIR: OnceLock<MonicPolyPair> = OnceLock::new();
    lemma1_main(PAIR.get_or_init(MonicPolyPair::hildebrand), x, k)
}

/// `Σ_{n≤x, (n,k)=1} μ²(n) Π_{p|n} P1(p)/P2(p)` against its main term;
/// scaled error `|lhs − main|·√x/m(k)`.
pub fn lemma1(pair: &MonicPolyPair, k: u64, ladder: &[u64]) -> Result<LemmaReport> {
    let top = check_ladder(ladder)?;
    if k == 0 {
        return Err(Error::Domain("k must be positive".into()));
    }
    if top > pair.checked_to {
        return Err(Error::Domain(format!(
            "pair only checked for nonvanishing up to {}, ladder reaches {top}",
            pair.checked_to
        )));
    }
    let sieve = MultSieve::new(top, |p| if k.is_multiple_of(p) { 0.0 } else { pair.ratio(p) })?;
    let lhs = sieve.ladder_sums(ladder, |_| 1.0);
    let mk = m_of(k as i64)?;
    let main: Vec<f64> = ladder.iter().map(|&x| lemma1_main(pair, x as f64, k)).collect();
    let scaled_error = ladder
        .iter()
        .zip(lhs.iter().zip(&main))
        .map(|(&x, (l, m))| (l - m).abs() * (x as f64).sqrt() / mk)
        .collect();
    let c = lemma1_constants(pair);
    let mut obs = BTreeMap::new();
    obs.insert("euler_product".into(), c.product.value);
    obs.insert("prime_log_sum".into(), c.prime_log_sum.value);
    obs.insert("p_cut".into(), c.product.p_cut as f64);
    Ok(LemmaReport {
        lemma: 1,
        params: serde_json::json!({ "p1": pair.p1.0, "p2": pair.p2.0, "k": k }),
        x_ladder: ladder.to_vec(),
        lhs,
        main,
        scaled_error,
        observations: obs,
    })
}

fn lemma2_factor(p: u64) -> f64 {
    -((p as f64) - 2.0) / (p as f64 * (p as f64 - 1.0))
}

/// Partial sums `S(x) = Σ_{n≤x} μ(n)φ₂(n)/(nφ(n))`, which stay bounded and
/// tend to zero. The scaled error is `|S(x)|`; the supremum of `|S|` over
/// `x ≤ top` is reported as `sup_abs`.
pub fn lemma2(ladder: &[u64]) -> Result<LemmaReport> {
    let top = check_ladder(ladder)?;
    let sieve = MultSieve::new(top, lemma2_factor)?;
    let mut sup: f64 = 0.0;
    let mut acc = NeumaierSum::new();
    let mut lhs = Vec::new();
    let mut next = 0;
    for n in 1..=top {
        acc.add(sieve.values[n as usize]);
        sup = sup.max(acc.value().abs());
        if n == ladder[next] {
            lhs.push(acc.value());
            next += 1;
        }
    }
    let mut obs = BTreeMap::new();
    obs.insert("sup_abs".into(), sup);
    for (i, w) in lhs.windows(2).enumerate() {
        obs.insert(format!("diff_{}_{}", ladder[i], ladder[i + 1]), (w[1] - w[0]).abs());
    }
    Ok(LemmaReport {
        lemma: 2,
        params: serde_json::json!({}),
        x_ladder: ladder.to_vec(),
        scaled_error: lhs.iter().map(|v| v.abs()).collect(),
        main: vec![0.0; lhs.len()],
        lhs,
        observations: obs,
    })
}

fn lemma3_factor(p: u64) -> f64 {
    let pf = p as f64;
    (3.0 * pf - 4.0) / ((pf - 1.0) * (pf.sqrt() - 1.0))
}

/// Leading constant `Π_p (1 − 1/p)³ (1 + (3p − 4)/(√p (p − 1)(√p − 1)))`.
pub fn euler_p1(p_cut: u64) -> PrimeTruncation {
    let logs = prime_sum(
        p_cut,
        |p| {
            let pf = p as f64;
            3.0 * (-1.0 / pf).ln_1p() + (lemma3_factor(p) / pf.sqrt()).ln_1p()
        },
        Decay::INVERSE_THREE_HALVES,
    );
    PrimeTruncation { value: logs.value.exp(), tail: logs.tail, p_cut }
}

/// The same constant from the four-term bracket expansion of each local factor.
pub fn euler_p1_bracket(p_cut: u64) -> PrimeTruncation {
    let logs = prime_sum(
        p_cut,
        |p| {
            let pf = p as f64;
            let sp = pf.sqrt();
            let a = (3.0 * pf - 4.0) * sp / ((pf - 1.0) * (sp - 1.0));
            let t1 = 3.0 / pf.powf(1.5) * (pf - sp / 3.0 - 1.0) / (pf - sp - 1.0 + 1.0 / sp);
            let t2 = 3.0 / (pf * pf) * (1.0 - a);
            let t3 = (3.0 * a - 1.0) / pf.powi(3);
            let t4 = -a / pf.powi(4);
            (t1 + t2 + t3 + t4).ln_1p()
        },
        Decay::INVERSE_THREE_HALVES,
    );
    PrimeTruncation { value: logs.value.exp(), tail: logs.tail, p_cut }
}

/// `Σ_{n≤x} μ²(n) Π_{p|n} (3p − 4)/((p − 1)(√p − 1))` against the leading
/// term `P(1)√x log²x`. The scaled error is the relative deviation of
/// `lhs/(√x log²x)` from `P(1)`; lower-order terms of relative size
/// `1/log x` are not modelled.
pub fn lemma3(ladder: &[u64]) -> Result<LemmaReport> {
    check_ladder(ladder)?;
    let top = *ladder.last().unwrap();
    let sieve = MultSieve::new(top, lemma3_factor)?;
    let lhs = sieve.ladder_sums(ladder, |_| 1.0);
    let p1 = euler_p1(DEFAULT_SINGULAR_P_CUT);
    let main: Vec<f64> = ladder
        .iter()
        .map(|&x| {
            let x = x as f64;
            p1.value * x.sqrt() * x.ln().powi(2)
        })
        .collect();
    let scaled_error = lhs.iter().zip(&main).map(|(l, m)| l / m - 1.0).collect();
    let mut obs = BTreeMap::new();
    obs.insert("p1".into(), p1.value);
    Ok(LemmaReport {
        lemma: 3,
        params: serde_json::json!({}),
        x_ladder: ladder.to_vec(),
        lhs,
        main,
        scaled_error,
        observations: obs,
    })
}

fn lemma4_factor(j: i64, k: u64, p: u64) -> f64 {
    if k.is_multiple_of(p) {
        0.0
    } else if j.unsigned_abs().is_multiple_of(p) {
        1.0 / (p as f64 - 1.0)
    } else {
        -1.0 / ((p as f64 - 1.0) * (p as f64 - 1.0))
    }
}

/// Limit of `Σ_{(n,k)=1} μ(n) μφ((n,j))/φ²(n)`.
pub fn lemma4_main(j: i64, k: u64) -> Result<f64> {
    if j == 0 || k == 0 {
        return Err(Error::Domain("need j ≠ 0 and k > 0".into()));
    }
    let ja = j.unsigned_abs();
    let bracket = if k % 2 == 1 {
        1.0 - factor::mobius(factor::gcd(2, j)) as f64
    } else {
        1.0
    };
    let c2 = singular::constant_c(2, DEFAULT_SINGULAR_P_CUT)?.value;
    let mut v = bracket * c2;
    for p in factor::distinct_primes(k).into_iter().filter(|&p| p > 2) {
        let pf = p as f64;
        v *= (pf - 1.0) * (pf - 1.0) / (pf * (pf - 2.0));
    }
    for p in factor::distinct_primes(ja).into_iter().filter(|&p| p > 2 && !k.is_multiple_of(p)) {
        let pf = p as f64;
        v *= (pf - 1.0) / (pf - 2.0);
    }
    Ok(v)
}

/// Limit of `−Σ_n μ(n) μφ((n,j)) log n/φ²(n)`.
pub fn lemma4_log_main(j: i64) -> Result<f64> {
    if j == 0 {
        return Err(Error::Domain("need j ≠ 0".into()));
    }
    let ja = j.unsigned_abs();
    if ja.is_multiple_of(2) {
        let s2 = singular::singular_sn(2, j)?.value;
        let odd_all = odd_prime_log_sum();
        let mut coprime = odd_all;
        let mut dividing = 0.0;
        for p in factor::distinct_primes(ja) {
            let pf = p as f64;
            if p > 2 {
                coprime -= pf.ln() / (pf * (pf - 2.0));
            }
            dividing += pf.ln() / pf;
        }
        Ok(s2 * (coprime - dividing))
    } else {
        let s2 = singular::singular_sn(2, 2 * j)?.value;
        Ok(s2 * std::f64::consts::LN_2 / 2.0)
    }
}

/// `Σ_{p>2} log p/(p(p − 2))`.
fn odd_prime_log_sum() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        prime_sum(
            DEFAULT_LEMMA_P_CUT,
            |p| {
                if p == 2 {
                    0.0
                } else {
                    let pf = p as f64;
                    pf.ln() / (pf * (pf - 2.0))
                }
            },
            Decay::LOG_OVER_SQUARE,
        )
        .value
    })
}

/// `j′ = j*/(j*, k)` and the error scale `d(j′) j′/φ(j′)`.
fn lemma4_scale(j: i64, k: u64) -> f64 {
    let jstar: u64 = factor::distinct_primes(j.unsigned_abs()).iter().product();
    let jp = jstar / factor::gcd(jstar as i64, k as i64);
    factor::num_divisors(jp) as f64 * jp as f64 / factor::euler_phi(jp) as f64
}

/// `Σ_{n≤x, (n,k)=1} μ(n) μφ((n,j))/φ²(n)` against its limit; scaled error
/// `|lhs − main|·x/(d(j′)j′/φ(j′))`. With `log_weighted`, the sum carries
/// `−log n`, `k` must be 1 and the scale gains a factor `log 2x`.
pub fn lemma4(j: i64, k: u64, ladder: &[u64], log_weighted: bool) -> Result<LemmaReport> {
    let top = check_ladder(ladder)?;
    if log_weighted && k != 1 {
        return Err(Error::Precondition("the log-weighted form needs k = 1".into()));
    }
    let main_value = if log_weighted { lemma4_log_main(j)? } else { lemma4_main(j, k)? };
    let sieve = MultSieve::new(top, |p| lemma4_factor(j, k, p))?;
    let lhs = if log_weighted {
        sieve.ladder_sums(ladder, |n| -(n as f64).ln())
    } else {
        sieve.ladder_sums(ladder, |_| 1.0)
    };
    let scale = lemma4_scale(j, k);
    let scaled_error = ladder
        .iter()
        .zip(&lhs)
        .map(|(&x, l)| {
            let x = x as f64;
            let s = if log_weighted { scale * (2.0 * x).ln() } else { scale };
            (l - main_value).abs() * x / s
        })
        .collect();
    Ok(LemmaReport {
        lemma: 4,
        params: serde_json::json!({ "j": j, "k": k, "log_weighted": log_weighted }),
        x_ladder: ladder.to_vec(),
        main: vec![main_value; lhs.len()],
        lhs,
        scaled_error,
        observations: BTreeMap::new(),
    })
}

fn lemma5_factor(big_j: u64, k: u64, p: u64) -> f64 {
    if p == 2 {
        return if k.is_multiple_of(2) { -1.0 } else { 1.0 };
    }
    let pf = p as f64;
    let mut v = -2.0 / ((pf - 1.0) * (pf - 2.0));
    if big_j.is_multiple_of(p) {
        v *= -0.5 * (pf - 2.0);
    }
    if k.is_multiple_of(p) {
        v *= -1.0 / (pf - 1.0);
    }
    v
}

/// Limit of the lemma-5 sum:
/// `2[2∤k] Π_{p∤J}(1 − 2/((p−1)(p−2))) Π_{p>2, p|J, p∤k}(1 + 1/(p−1)) Π_{p>2, p|k}(1 − 1/(p−1)²)`.
pub fn lemma5_main(big_j: i64, k: u64) -> Result<f64> {
    let ja = lemma5_check(big_j, k)?;
    if k.is_multiple_of(2) || ja % 3 != 0 {
        // p = 3 ∤ J contributes the factor 1 − 2/(2·1) = 0
        return Ok(0.0);
    }
    let c3 = singular::constant_c(3, DEFAULT_SINGULAR_P_CUT)?.value;
    let mut v = 2.0 * c3;
    for p in factor::distinct_primes(ja).into_iter().filter(|&p| p > 2) {
        let pf = p as f64;
        if p > 3 {
            v /= 1.0 - 2.0 / ((pf - 1.0) * (pf - 2.0));
        }
        if !k.is_multiple_of(p) {
            v *= 1.0 + 1.0 / (pf - 1.0);
        } else {
            v *= 1.0 - 1.0 / ((pf - 1.0) * (pf - 1.0));
        }
    }
    Ok(v)
}

fn lemma5_check(big_j: i64, k: u64) -> Result<u64> {
    let ja = big_j.unsigned_abs();
    if big_j == 0 || !ja.is_multiple_of(2) {
        return Err(Error::Precondition(format!("J must be even and nonzero, got {big_j}")));
    }
    if k == 0 || !ja.is_multiple_of(k) {
        return Err(Error::Precondition(format!("k = {k} must divide J = {big_j}")));
    }
    Ok(ja)
}

/// The lemma-5 sum against its limit; scaled error `|lhs − main|·x^{0.9}`.
pub fn lemma5(big_j: i64, k: u64, ladder: &[u64]) -> Result<LemmaReport> {
    let ja = lemma5_check(big_j, k)?;
    let top = check_ladder(ladder)?;
    let main_value = lemma5_main(big_j, k)?;
    let sieve = MultSieve::new(top, |p| lemma5_factor(ja, k, p))?;
    let lhs = sieve.ladder_sums(ladder, |_| 1.0);
    let scaled_error = ladder
        .iter()
        .zip(&lhs)
        .map(|(&x, l)| (l - main_value).abs() * (x as f64).powf(0.9))
        .collect();
    Ok(LemmaReport {
        lemma: 5,
        params: serde_json::json!({ "J": big_j, "k": k }),
        x_ladder: ladder.to_vec(),
        main: vec![main_value; lhs.len()],
        lhs,
        scaled_error,
        observations: BTreeMap::new(),
    })
}

/// Per-prime log coefficients of both sides of
/// `Σ_{d|n} μ²(d) f(d) log d = (Σ_{p|n} f(p) log p/(1 + f(p))) Π_{p|n} (1 + f(p))`
/// for multiplicative `f` given on primes.
#[derive(Clone, Debug, PartialEq)]
pub struct MultIdentity {
    pub lhs: BTreeMap<u64, BigRational>,
    pub rhs: BTreeMap<u64, BigRational>,
}

impl MultIdentity {
    /// Largest coefficient difference; zero when the identity holds.
    pub fn residual(&self) -> BigRational {
        let keys: std::collections::BTreeSet<u64> =
            self.lhs.keys().chain(self.rhs.keys()).copied().collect();
        keys.into_iter()
            .map(|p| {
                let z = BigRational::zero();
                let d = self.lhs.get(&p).unwrap_or(&z) - self.rhs.get(&p).unwrap_or(&z);
                if d < BigRational::zero() { -d } else { d }
            })
            .max()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn eval_lhs(&self) -> f64 {
        eval_logs(&self.lhs)
    }

    pub fn eval_rhs(&self) -> f64 {
        eval_logs(&self.rhs)
    }
}

fn eval_logs(m: &BTreeMap<u64, BigRational>) -> f64 {
    m.iter()
        .map(|(&p, c)| crate::numeric::rational_to_f64(c) * (p as f64).ln())
        .sum()
}

pub fn mult_identity_check<F: Fn(u64) -> BigRational>(n: i64, f: F) -> Result<MultIdentity> {
    if n == 0 {
        return Err(Error::Domain("n must be nonzero".into()));
    }
    let primes = factor::distinct_primes(n.unsigned_abs());
    let fp: Vec<BigRational> = primes.iter().map(|&p| f(p)).collect();
    if fp.iter().any(|v| (v + BigRational::one()).is_zero()) {
        return Err(Error::Domain("1 + f(p) vanishes".into()));
    }
    let mut lhs: BTreeMap<u64, BigRational> = BTreeMap::new();
    for mask in 1u64..(1 << primes.len()) {
        let mut fd = BigRational::one();
        for (i, v) in fp.iter().enumerate() {
            if mask >> i & 1 == 1 {
                fd *= v;
            }
        }
        for (i, &p) in primes.iter().enumerate() {
            if mask >> i & 1 == 1 {
                *lhs.entry(p).or_insert_with(BigRational::zero) += &fd;
            }
        }
    }
    let total: BigRational = fp.iter().fold(BigRational::one(), |acc, v| acc * (v + BigRational::one()));
    let rhs = primes
        .iter()
        .zip(&fp)
        .map(|(&p, v)| (p, v / (v + BigRational::one()) * &total))
        .collect();
    lhs.retain(|_, v| !v.is_zero());
    Ok(MultIdentity { lhs, rhs })
}

/// `f = 1/φ` on primes.
pub fn inverse_phi(p: u64) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(p - 1))
}
