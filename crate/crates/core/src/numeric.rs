//! Scalar abstractions shared by the exact and floating point backends.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};

/// Compensated (Neumaier) running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// A value type the correlation and moment sums can run over.
///
/// `f64` sums are compensated; the exact types sum plainly.
pub trait Sample:
    Clone + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Send + Sync
{
    fn from_i64(v: i64) -> Self;

    fn total<I: IntoIterator<Item = Self>>(iter: I) -> Self {
        iter.into_iter().fold(Self::zero(), |acc, x| acc + x)
    }

    fn powu(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = acc * self.clone();
        }
        acc
    }

    fn to_f64_lossy(&self) -> f64;
}

impl Sample for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn total<I: IntoIterator<Item = Self>>(iter: I) -> Self {
        iter.into_iter().collect::<NeumaierSum>().value()
    }

    fn powu(&self, e: u32) -> Self {
        self.powi(e as i32)
    }

    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Sample for BigInt {
    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Sample for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn to_f64_lossy(&self) -> f64 {
        rational_to_f64(self)
    }
}

/// Fixed segment length for parallel reductions. Results depend on this
/// value only, never on the number of worker threads.
pub const CHUNK: usize = 1 << 14;

/// `Σ_{i ∈ [lo, hi)} f(i)` summed per fixed-size chunk in parallel, chunk
/// results combined in order.
pub fn chunked_sum<F>(lo: i64, hi: i64, f: F) -> f64
where
    F: Fn(i64) -> f64 + Sync,
{
    use rayon::prelude::*;
    if hi <= lo {
        return 0.0;
    }
    let len = (hi - lo) as usize;
    let chunks = len.div_ceil(CHUNK);
    let parts: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let a = lo + (c * CHUNK) as i64;
            let b = (a + CHUNK as i64).min(hi);
            (a..b).map(&f).collect::<NeumaierSum>().value()
        })
        .collect();
    parts.into_iter().collect::<NeumaierSum>().value()
}

/// Chunked exact sum; see [`chunked_sum`].
pub fn chunked_total<T, F>(lo: i64, hi: i64, f: F) -> T
where
    T: Sample,
    F: Fn(i64) -> T + Sync,
{
    use rayon::prelude::*;
    if hi <= lo {
        return T::zero();
    }
    let len = (hi - lo) as usize;
    let chunks = len.div_ceil(CHUNK);
    let parts: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let a = lo + (c * CHUNK) as i64;
            let b = (a + CHUNK as i64).min(hi);
            T::total((a..b).map(&f))
        })
        .collect();
    T::total(parts)
}

/// Exact rational image of a finite `f64` (every finite double is dyadic).
pub fn f64_to_rational(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite f64")
}

pub fn rational_to_f64(x: &BigRational) -> f64 {
    if let Some(v) = x.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // numerator and denominator both overflow f64; scale them down together
    let bits = x.numer().bits().max(x.denom().bits()) as i64;
    let shift = (bits - 900).max(0) as u64;
    let n = (x.numer() >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (x.denom() >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// An exact integer combination `Σ c_p log p` of logarithms of primes.
///
/// Sums of von Mangoldt values are compared in this form when bit-exact
/// agreement is required.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LogCombination {
    coeffs: BTreeMap<u64, i128>,
}

impl LogCombination {
    pub fn new() -> Self {
        Self::default()
    }

    /// Collect a dense coefficient vector indexed by the prime itself.
    pub fn from_dense(dense: &[i128]) -> Self {
        let coeffs = dense
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(p, &c)| (p as u64, c))
            .collect();
        Self { coeffs }
    }

    pub fn add_term(&mut self, p: u64, c: i128) {
        if c == 0 {
            return;
        }
        let e = self.coeffs.entry(p).or_insert(0);
        *e += c;
        if *e == 0 {
            self.coeffs.remove(&p);
        }
    }

    pub fn add_assign(&mut self, other: &LogCombination) {
        for (&p, &c) in &other.coeffs {
            self.add_term(p, c);
        }
    }

    pub fn scale(&self, k: i128) -> LogCombination {
        let mut out = LogCombination::new();
        for (&p, &c) in &self.coeffs {
            out.add_term(p, c * k);
        }
        out
    }

    pub fn coefficient(&self, p: u64) -> i128 {
        self.coeffs.get(&p).copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (u64, i128)> + '_ {
        self.coeffs.iter().map(|(&p, &c)| (p, c))
    }

    pub fn eval(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(&p, &c)| c as f64 * (p as f64).ln())
            .collect::<NeumaierSum>()
            .value()
    }
}

impl fmt::Display for LogCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&p, &c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            write!(f, "{c}·log{p}")?;
            first = false;
        }
        Ok(())
    }
}
