//! Numerical constants and truncated prime series.
//!
//! Every main term that needs Euler's constant, `log 2π`, or a convergent
//! sum/product over primes takes it from here.

use std::borrow::Cow;
use std::sync::OnceLock;

use crate::numeric::NeumaierSum;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
pub const LOG_TWO_PI: f64 = 1.837_877_066_409_345_5;

/// `2 − γ − log 2π`, the linear coefficient in the pair-average asymptotics.
pub const PAIR_AVERAGE_A: f64 = 2.0 - EULER_GAMMA - LOG_TWO_PI;

/// Primes up to this bound are sieved once and shared.
pub const PRIME_CACHE_LIMIT: u64 = 10_000_000;

/// Default truncation prime for singular series.
pub const DEFAULT_SINGULAR_P_CUT: u64 = 1_000_000;

/// Default truncation prime for the constants in lemma main terms.
pub const DEFAULT_LEMMA_P_CUT: u64 = 10_000_000;

/// Plain sieve of Eratosthenes; deliberately separate from the linear sieve
/// in [`crate::arith`] so the two can check each other.
pub fn primes_up_to(limit: u64) -> Vec<u32> {
    if limit < 2 {
        return Vec::new();
    }
    let limit = limit as usize;
    let mut composite = vec![false; limit + 1];
    let mut primes = Vec::with_capacity(limit / 10 + 16);
    for i in 2..=limit {
        if !composite[i] {
            primes.push(i as u32);
            let mut j = i * i;
            while j <= limit {
                composite[j] = true;
                j += i;
            }
        }
    }
    primes
}

fn cached_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| primes_up_to(PRIME_CACHE_LIMIT))
}

/// All primes `p ≤ limit`.
pub fn primes_through(limit: u64) -> Cow<'static, [u32]> {
    if limit <= PRIME_CACHE_LIMIT {
        let all = cached_primes();
        let end = all.partition_point(|&p| (p as u64) <= limit);
        Cow::Borrowed(&all[..end])
    } else {
        Cow::Owned(primes_up_to(limit))
    }
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 needs x > 0");
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -x / k as f64;
            sum += term / k as f64;
            if term.abs() < 1e-18 {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // modified Lentz on the continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Asymptotic shape `(log p)^log_power / p^exponent` of a prime series term,
/// used to estimate the part of the series beyond the truncation prime.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decay {
    pub exponent: f64,
    pub log_power: u32,
}

impl Decay {
    pub const INVERSE_SQUARE: Decay = Decay { exponent: 2.0, log_power: 0 };
    pub const LOG_OVER_SQUARE: Decay = Decay { exponent: 2.0, log_power: 1 };
    pub const INVERSE_THREE_HALVES: Decay = Decay { exponent: 1.5, log_power: 0 };

    /// `∫_P^∞ (log t)^ℓ t^{-s} dt / log t`, the prime-density model of the tail.
    pub fn tail_integral(&self, p: f64) -> f64 {
        let s1 = self.exponent - 1.0;
        let lp = p.ln();
        match self.log_power {
            0 => exp_integral_e1(s1 * lp),
            1 => p.powf(-s1) / s1,
            2 => p.powf(-s1) * (lp / s1 + 1.0 / (s1 * s1)),
            l => panic!("unsupported log power {l}"),
        }
    }

    fn shape(&self, p: f64) -> f64 {
        p.ln().powi(self.log_power as i32) / p.powf(self.exponent)
    }
}

/// A prime series truncated at `p_cut` with its estimated remainder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimeTruncation {
    /// Truncated sum plus the estimated tail.
    pub value: f64,
    /// The estimated tail beyond `p_cut` (already included in `value`).
    pub tail: f64,
    pub p_cut: u64,
}

/// `Σ_{p} term(p)`, summing exactly over `p ≤ p_cut` and estimating the rest
/// from the local size of the last term and the prime density `1/log t`.
pub fn prime_sum<F: Fn(u64) -> f64>(p_cut: u64, term: F, decay: Decay) -> PrimeTruncation {
    let primes = primes_through(p_cut);
    let mut acc = NeumaierSum::new();
    for &p in primes.iter() {
        acc.add(term(p as u64));
    }
    let tail = match primes.last() {
        Some(&last) => {
            let last = last as u64;
            let coeff = term(last) / decay.shape(last as f64);
            coeff * decay.tail_integral(p_cut as f64)
        }
        None => 0.0,
    };
    acc.add(tail);
    PrimeTruncation { value: acc.value(), tail, p_cut }
}

/// `Π_p factor(p)` through its logarithm; `decay` describes `log factor(p)`.
/// An exactly vanishing factor makes the whole product exactly zero.
pub fn prime_product<F: Fn(u64) -> f64>(p_cut: u64, factor: F, decay: Decay) -> PrimeTruncation {
    let primes = primes_through(p_cut);
    if primes.iter().any(|&p| factor(p as u64) == 0.0) {
        return PrimeTruncation { value: 0.0, tail: 0.0, p_cut };
    }
    let logs = prime_sum(p_cut, |p| factor(p).ln(), decay);
    PrimeTruncation {
        value: logs.value.exp(),
        tail: logs.tail,
        p_cut,
    }
}

/// `Σ_p log p / (p(p−1))`, the prime constant in the Hildebrand main term.
pub fn hildebrand_prime_sum() -> PrimeTruncation {
    static CONST: OnceLock<PrimeTruncation> = OnceLock::new();
    *CONST.get_or_init(|| {
        prime_sum(
            DEFAULT_LEMMA_P_CUT,
            |p| {
                let p = p as f64;
                p.ln() / (p * (p - 1.0))
            },
            Decay::LOG_OVER_SQUARE,
        )
    })
}
