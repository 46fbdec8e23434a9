//! Hardy–Littlewood singular series and their averages.
//!
//! A singular series is a product over all primes. Primes that divide the
//! shift differences (or are at most the number of shifts) contribute exact
//! rational factors; every other prime contributes the same generic factor,
//! whose product is truncated at `p_cut` with an estimated remainder.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{Decay, PrimeTruncation, DEFAULT_SINGULAR_P_CUT};
use crate::error::{Error, Result};
use crate::factor;
use crate::numeric::{rational_to_f64, NeumaierSum};

/// Largest `h` accepted by the `O(h²)` triple sums.
pub const MAX_TRIPLE_H: u64 = 10_000;

/// Largest `h` accepted by the pair sums.
pub const MAX_PAIR_H: u64 = 50_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SingularValue {
    pub value: f64,
    /// Product of the exact local factors at exceptional primes.
    pub finite_part: BigRational,
    pub p_cut: u64,
    /// Bound on the relative error from truncating the generic product.
    pub tail_bound: f64,
}

impl SingularValue {
    fn zero(p_cut: u64) -> Self {
        Self { value: 0.0, finite_part: BigRational::zero(), p_cut, tail_bound: 0.0 }
    }

    pub fn is_exact_zero(&self) -> bool {
        self.finite_part.is_zero()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "value": self.value,
            "finite_part": self.finite_part.to_string(),
            "p_cut": self.p_cut,
            "tail_bound": self.tail_bound,
        })
    }
}

/// Distinct shifts `j_i` with multiplicities `a_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftPattern {
    shifts: Vec<i64>,
    multiplicities: Vec<u32>,
}

impl ShiftPattern {
    pub fn new(shifts: Vec<i64>, multiplicities: Vec<u32>) -> Result<Self> {
        if shifts.is_empty() {
            return Err(Error::Domain("pattern needs at least one shift".into()));
        }
        if shifts.len() != multiplicities.len() {
            return Err(Error::Domain("shifts and multiplicities differ in length".into()));
        }
        if multiplicities.contains(&0) {
            return Err(Error::Domain("multiplicities must be ≥ 1".into()));
        }
        check_distinct(&shifts)?;
        Ok(Self { shifts, multiplicities })
    }

    /// All multiplicities one.
    pub fn simple(shifts: Vec<i64>) -> Result<Self> {
        let m = vec![1; shifts.len()];
        Self::new(shifts, m)
    }

    /// Parses `"0:1,2:1"` (shift:multiplicity, multiplicity defaults to 1).
    pub fn parse(s: &str) -> Result<Self> {
        let mut shifts = Vec::new();
        let mut mults = Vec::new();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (j, a) = match item.split_once(':') {
                Some((j, a)) => (j.trim(), a.trim()),
                None => (item, "1"),
            };
            shifts.push(j.parse::<i64>().map_err(|e| Error::Domain(format!("bad shift {j:?}: {e}")))?);
            mults.push(a.parse::<u32>().map_err(|e| Error::Domain(format!("bad multiplicity {a:?}: {e}")))?);
        }
        Self::new(shifts, mults)
    }

    pub fn shifts(&self) -> &[i64] {
        &self.shifts
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicities
    }

    pub fn r(&self) -> usize {
        self.shifts.len()
    }

    pub fn k(&self) -> u32 {
        self.multiplicities.iter().sum()
    }

    /// The same pattern translated so that the first shift is zero.
    pub fn normalized(&self) -> Self {
        let j1 = self.shifts[0];
        Self {
            shifts: self.shifts.iter().map(|j| j - j1).collect(),
            multiplicities: self.multiplicities.clone(),
        }
    }

    /// Multiplicities sorted decreasingly, the key for prediction constants.
    pub fn partition(&self) -> Vec<u32> {
        let mut a = self.multiplicities.clone();
        a.sort_unstable_by(|x, y| y.cmp(x));
        a
    }
}

impl std::fmt::Display for ShiftPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .shifts
            .iter()
            .zip(&self.multiplicities)
            .map(|(j, a)| format!("{j}:{a}"))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

fn check_distinct(shifts: &[i64]) -> Result<()> {
    let mut s = shifts.to_vec();
    s.sort_unstable();
    if s.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Domain(format!("shifts must be distinct: {shifts:?}")));
    }
    Ok(())
}

/// `log` of the generic local factor `(1 − 1/p)^{−r}(1 − r/p)`.
fn generic_log(r: usize, p: u64) -> f64 {
    let p = p as f64;
    -(r as f64) * (-1.0 / p).ln_1p() + (-(r as f64) / p).ln_1p()
}

fn generic_product(r: usize, p_cut: u64) -> PrimeTruncation {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), PrimeTruncation>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&(r, p_cut)) {
        return *v;
    }
    let logs = crate::constants::prime_sum(
        p_cut,
        |p| if p as usize <= r { 0.0 } else { generic_log(r, p) },
        Decay::INVERSE_SQUARE,
    );
    let v = PrimeTruncation { value: logs.value.exp(), tail: logs.tail, p_cut };
    cache.lock().unwrap().insert((r, p_cut), v);
    v
}

fn generic_tail_bound(r: usize, p_cut: u64) -> f64 {
    (r * (r + 1)) as f64 / p_cut as f64
}

fn constant_c_log(n: u32, p: u64) -> f64 {
    let p = p as f64;
    let n = n as f64;
    (-(n - 1.0) / ((p - 1.0) * (p - n + 1.0))).ln_1p()
}

/// The constant `C_n = Π_{p ≠ n−1, n} (1 − (n−1)/((p−1)(p−n+1)))` for `n ∈ {2, 3}`.
pub fn constant_c(n: u32, p_cut: u64) -> Result<SingularValue> {
    if !(n == 2 || n == 3) {
        return Err(Error::Domain(format!("constant C_n implemented for n ∈ {{2, 3}}, got {n}")));
    }
    if p_cut < 5 {
        return Err(Error::Precondition(format!("p_cut must be ≥ 5, got {p_cut}")));
    }
    static CACHE: OnceLock<Mutex<HashMap<(u32, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let cached = cache.lock().unwrap().get(&(n, p_cut)).copied();
    let value = match cached {
        Some(v) => v,
        None => {
            let skip = |p: u64| p + 1 == n as u64 || p == n as u64;
            let logs = crate::constants::prime_sum(
                p_cut,
                |p| if skip(p) { 0.0 } else { constant_c_log(n, p) },
                Decay::INVERSE_SQUARE,
            );
            let v = logs.value.exp();
            cache.lock().unwrap().insert((n, p_cut), v);
            v
        }
    };
    Ok(SingularValue {
        value,
        finite_part: BigRational::one(),
        p_cut,
        tail_bound: 2.0 * (n as f64 - 1.0) / p_cut as f64,
    })
}

/// `𝔖_n(j)` for `n ∈ {2, 3}` and `j ≠ 0`.
pub fn singular_sn(n: u32, j: i64) -> Result<SingularValue> {
    singular_sn_with(n, j, DEFAULT_SINGULAR_P_CUT)
}

pub fn singular_sn_with(n: u32, j: i64, p_cut: u64) -> Result<SingularValue> {
    if j == 0 {
        return Err(Error::Domain("singular series needs j ≠ 0".into()));
    }
    let c = constant_c(n, p_cut)?;
    let n64 = n as u64;
    // p(n) = n for prime n; both supported n are prime
    if !j.unsigned_abs().is_multiple_of(n64) {
        return Ok(SingularValue::zero(p_cut));
    }
    let mut fp = BigRational::one();
    for p in factor::distinct_primes(j.unsigned_abs()) {
        let f = if p + 1 == n64 || p == n64 {
            BigRational::new(BigInt::from(p), BigInt::from(p - 1))
        } else {
            // 1 + 1/(p − n)
            BigRational::new(BigInt::from(p as i64 - n as i64 + 1), BigInt::from(p as i64 - n as i64))
        };
        fp *= f;
    }
    Ok(SingularValue {
        value: c.value * rational_to_f64(&fp),
        finite_part: fp,
        p_cut,
        tail_bound: c.tail_bound,
    })
}

/// Number of residue classes mod `p` occupied by `shifts`.
pub fn residue_classes(shifts: &[i64], p: u64) -> u64 {
    let mut seen: Vec<i64> = shifts.iter().map(|j| j.rem_euclid(p as i64)).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len() as u64
}

/// `𝔖(𝒋) = Π_p (1 − 1/p)^{−r}(1 − ν_p(𝒋)/p)`.
pub fn singular_vector(shifts: &[i64]) -> Result<SingularValue> {
    singular_vector_with(shifts, DEFAULT_SINGULAR_P_CUT)
}

pub fn singular_vector_with(shifts: &[i64], p_cut: u64) -> Result<SingularValue> {
    if shifts.is_empty() {
        return Err(Error::Domain("singular series needs at least one shift".into()));
    }
    check_distinct(shifts)?;
    let r = shifts.len();
    if r == 1 {
        return Ok(SingularValue { value: 1.0, finite_part: BigRational::one(), p_cut, tail_bound: 0.0 });
    }
    let mut special: Vec<u64> = (2..=r as u64).filter(|&p| factor::is_prime(p)).collect();
    for i in 0..r {
        for k in i + 1..r {
            special.extend(factor::distinct_primes((shifts[i] - shifts[k]).unsigned_abs()));
        }
    }
    special.sort_unstable();
    special.dedup();

    let mut fp = BigRational::one();
    for &p in &special {
        let nu = residue_classes(shifts, p);
        if nu == p {
            return Ok(SingularValue::zero(p_cut));
        }
        let num = BigInt::from(p).pow(r as u32 - 1) * BigInt::from(p - nu);
        let den = BigInt::from(p - 1).pow(r as u32);
        fp *= BigRational::new(num, den);
    }
    let generic = generic_product(r, p_cut);
    let removed: f64 = special
        .iter()
        .filter(|&&p| p as usize > r && p <= p_cut)
        .map(|&p| generic_log(r, p))
        .sum();
    Ok(SingularValue {
        value: rational_to_f64(&fp) * generic.value * (-removed).exp(),
        finite_part: fp,
        p_cut,
        tail_bound: generic_tail_bound(r, p_cut),
    })
}

/// Compares `𝔖((0, j1, j2))` with `𝔖_2((j1, j2))·𝔖_3(j1 j2 (j1 − j2))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductIdentityCheck {
    pub vector: f64,
    pub factored: f64,
    pub residual: f64,
    pub tail_bound: f64,
}

pub fn product_identity_check(j1: i64, j2: i64, p_cut: u64) -> Result<ProductIdentityCheck> {
    if j1 == 0 || j2 == 0 || j1 == j2 {
        return Err(Error::Precondition("need j1 ≠ j2 and j1·j2 ≠ 0".into()));
    }
    let v = singular_vector_with(&[0, j1, j2], p_cut)?;
    let g = factor::gcd(j1, j2) as i64;
    let s2 = singular_sn_with(2, g, p_cut)?;
    let prod = (j1 as i128) * (j2 as i128) * ((j1 - j2) as i128);
    let prod = i64::try_from(prod).map_err(|_| Error::Domain("shift product overflows".into()))?;
    let s3 = singular_sn_with(3, prod, p_cut)?;
    let factored = s2.value * s3.value;
    Ok(ProductIdentityCheck {
        vector: v.value,
        factored,
        residual: (v.value - factored).abs(),
        tail_bound: v.tail_bound + s2.tail_bound + s3.tail_bound,
    })
}

/// `𝔘(𝒋) = Σ_{𝒥 ⊆ 𝒋} (−1)^{r−|𝒥|} 𝔖(𝒥)`, with `𝔖(∅) = 1`.
pub fn u_transform(shifts: &[i64]) -> Result<f64> {
    check_distinct(shifts)?;
    let r = shifts.len();
    if r > 20 {
        return Err(Error::Capacity("u_transform limited to 20 shifts".into()));
    }
    let mut acc = NeumaierSum::new();
    for mask in 0u32..(1 << r) {
        let sub: Vec<i64> = (0..r).filter(|i| mask >> i & 1 == 1).map(|i| shifts[i]).collect();
        let s = if sub.len() <= 1 { 1.0 } else { singular_vector(&sub)?.value };
        let sign = if (r - sub.len()).is_multiple_of(2) { 1.0 } else { -1.0 };
        acc.add(sign * s);
    }
    Ok(acc.value())
}

/// `𝔖_2(j)` for `j ∈ [0, h]` (entry 0 unused) by sieving the odd-prime
/// factors `(p−1)/(p−2)` over multiples.
pub fn s2_table(h: u64) -> Vec<f64> {
    let c2 = constant_c(2, DEFAULT_SINGULAR_P_CUT).expect("valid").value;
    let len = h as usize + 1;
    let mut t = vec![1.0f64; len];
    for &p in crate::constants::primes_through(h).iter().skip(1) {
        let p = p as usize;
        let f = (p - 1) as f64 / (p - 2) as f64;
        let mut m = p;
        while m < len {
            t[m] *= f;
            m += p;
        }
    }
    for (j, v) in t.iter_mut().enumerate() {
        *v = if j % 2 == 0 && j > 0 { 2.0 * c2 * *v } else { 0.0 };
    }
    t
}

/// `Π_{p | m, p > 3} (p − 2)/(p − 3)` for `m ∈ [0, h]`.
fn h3_table(h: u64) -> Vec<f64> {
    let len = h as usize + 1;
    let mut t = vec![1.0f64; len];
    for &p in crate::constants::primes_through(h).iter().skip(2) {
        let p = p as usize;
        let f = (p - 2) as f64 / (p - 3) as f64;
        let mut m = p;
        while m < len {
            t[m] *= f;
            m += p;
        }
    }
    t
}

/// `Σ_{1≤j≤h} (h − j) 𝔖_2(j)`.
pub fn weighted_s2_sum(h: u64) -> Result<f64> {
    if h < 2 {
        return Err(Error::Precondition(format!("h must be ≥ 2, got {h}")));
    }
    if h > MAX_PAIR_H {
        return Err(Error::Capacity(format!("h limited to {MAX_PAIR_H}")));
    }
    let t = s2_table(h);
    Ok((1..=h).map(|j| (h - j) as f64 * t[j as usize]).collect::<NeumaierSum>().value())
}

/// `h²/2 − (h log h)/2 + ((1 − γ − log 2π)/2) h`.
pub fn weighted_s2_main(h: u64) -> f64 {
    use crate::constants::{EULER_GAMMA, LOG_TWO_PI};
    let h = h as f64;
    h * h / 2.0 - h * h.ln() / 2.0 + (1.0 - EULER_GAMMA - LOG_TWO_PI) / 2.0 * h
}

fn check_r_h(r: u32, h: u64) -> Result<()> {
    if !(1..=3).contains(&r) {
        return Err(Error::Domain(format!("r must be in 1..=3, got {r}")));
    }
    if h < 2 {
        return Err(Error::Precondition(format!("h must be ≥ 2, got {h}")));
    }
    let cap = if r == 3 { MAX_TRIPLE_H } else { MAX_PAIR_H };
    if h > cap {
        return Err(Error::Capacity(format!("h = {h} exceeds the limit {cap} for r = {r}")));
    }
    Ok(())
}

/// Sum over sorted shift triples `0 < a < b ≤ h − 1` (differences from the
/// smallest shift) of `(h − b)·f(𝔖((0,a,b)), 𝔖_2(a), 𝔖_2(b), 𝔖_2(b − a))`.
fn triple_difference_sum<F>(h: u64, f: F) -> f64
where
    F: Fn(f64, f64, f64, f64) -> f64 + Sync,
{
    let s2 = s2_table(h);
    let h3 = h3_table(h);
    let c3 = constant_c(3, DEFAULT_SINGULAR_P_CUT).expect("valid").value;
    let parts: Vec<f64> = (2..h)
        .into_par_iter()
        .map(|b| {
            let mut acc = NeumaierSum::new();
            for a in 1..b {
                let d = b - a;
                let g = num_integer::gcd(a, b);
                let triple = if g % 2 == 1 || (a % 3 != 0 && b % 3 != 0 && d % 3 != 0) {
                    0.0
                } else {
                    let s2g = s2[g as usize];
                    let h3u = h3[a as usize] * h3[b as usize] * h3[d as usize]
                        / (h3[g as usize] * h3[g as usize]);
                    // G_3 = (2/1)(3/2) since the product is always even
                    s2g * c3 * 3.0 * h3u
                };
                acc.add(f(triple, s2[a as usize], s2[b as usize], s2[d as usize]));
            }
            (h - b) as f64 * acc.value()
        })
        .collect();
    parts.into_iter().collect::<NeumaierSum>().value()
}

/// `R_r(h)`: the sum of `𝔘` over ordered `r`-tuples of distinct shifts in `[1, h]`.
pub fn big_r(r: u32, h: u64) -> Result<f64> {
    check_r_h(r, h)?;
    Ok(match r {
        1 => 0.0,
        2 => 2.0 * weighted_s2_sum(h)? - (h * (h - 1)) as f64,
        _ => 6.0 * triple_difference_sum(h, |t, x, y, z| t - x - y - z + 2.0),
    })
}

/// `−h log h + A h`, the asymptotic form of `R_2(h)`.
pub fn big_r2_main(h: u64) -> f64 {
    let h = h as f64;
    -h * h.ln() + crate::constants::PAIR_AVERAGE_A * h
}

/// `Σ 𝔖(𝒋)` over ordered `r`-tuples of distinct shifts in `[1, h]`.
pub fn gallagher_sum(r: u32, h: u64) -> Result<f64> {
    check_r_h(r, h)?;
    Ok(match r {
        1 => h as f64,
        2 => 2.0 * weighted_s2_sum(h)?,
        _ => 6.0 * triple_difference_sum(h, |t, _, _, _| t),
    })
}

fn falling(x: u64, m: u32) -> f64 {
    (0..m as u64).map(|i| x.saturating_sub(i) as f64).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The Gallagher sum rebuilt from `R_0 = 1, R_1, …, R_r` by grouping each
/// `𝔖(𝒋) = Σ_{𝒥⊆𝒋} 𝔘(𝒥)`.
pub fn gallagher_via_r(r: u32, h: u64) -> Result<f64> {
    check_r_h(r, h)?;
    let mut acc = NeumaierSum::new();
    for m in 0..=r {
        let rm = if m == 0 { 1.0 } else { big_r(m, h)? };
        acc.add(binomial(r, m) * falling(h.saturating_sub(m as u64), r - m) * rm);
    }
    Ok(acc.value())
}

/// Brute-force sum of `𝔘` or `𝔖` over ordered distinct tuples, for small `h`.
pub fn tuple_sum_brute(r: u32, h: u64, use_u: bool) -> Result<f64> {
    check_r_h(r, h)?;
    let mut acc = NeumaierSum::new();
    let h = h as i64;
    let mut tuple = vec![0i64; r as usize];
    fn rec(
        depth: usize,
        h: i64,
        tuple: &mut Vec<i64>,
        use_u: bool,
        acc: &mut NeumaierSum,
    ) -> Result<()> {
        if depth == tuple.len() {
            let v = if use_u { u_transform(tuple)? } else { singular_vector(tuple)?.value };
            acc.add(v);
            return Ok(());
        }
        for j in 1..=h {
            if tuple[..depth].contains(&j) {
                continue;
            }
            tuple[depth] = j;
            rec(depth + 1, h, tuple, use_u, acc)?;
        }
        Ok(())
    }
    rec(0, h, &mut tuple, use_u, &mut acc)?;
    Ok(acc.value())
}
