//! Sieved arithmetic-function tables over `[1, n_max]`.
//!
//! One linear-sieve pass fills smallest prime factors, μ, φ, d(n) and Λ; the
//! tables are immutable afterwards and may be shared freely across threads.

mod cache;

pub use cache::{cache_file_name, CACHE_MAGIC, CACHE_VERSION};

use num_integer::Integer;

use crate::error::{Error, Result};
use crate::factor;
use crate::numeric::NeumaierSum;

/// Bytes of table storage per entry, including sieve scratch space.
pub const BYTES_PER_ENTRY: u64 = 34;

/// Default memory budget for a table build (2 GiB).
pub const DEFAULT_BUDGET_BYTES: u64 = 2 << 30;

#[derive(Clone, Debug, PartialEq)]
pub struct ArithTables {
    n_max: u64,
    spf: Vec<u32>,
    mu: Vec<i8>,
    phi: Vec<u32>,
    lambda: Vec<f64>,
    num_div: Vec<u32>,
    psi_prefix: Vec<f64>,
}

/// Largest squarefree divisor `j*` of a nonzero integer `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SquarefreeKernel {
    pub value: u64,
    pub source: i64,
}

pub fn squarefree_kernel(j: i64) -> Result<SquarefreeKernel> {
    if j == 0 {
        return Err(Error::Domain("squarefree kernel of 0".into()));
    }
    let value = factor::distinct_primes(j.unsigned_abs()).iter().product();
    Ok(SquarefreeKernel { value, source: j })
}

/// Multiplicative `φ₂` with `φ₂(p) = p − 2`, defined on squarefree `n`.
pub fn phi2(n: u64) -> Result<i64> {
    if !factor::is_squarefree(n) {
        return Err(Error::Domain(format!("phi2 needs squarefree input, got {n}")));
    }
    Ok(factor::distinct_primes(n)
        .iter()
        .map(|&p| p as i64 - 2)
        .product())
}

impl ArithTables {
    pub fn build(n_max: u64) -> Result<Self> {
        Self::build_with_budget(n_max, DEFAULT_BUDGET_BYTES)
    }

    pub fn build_with_budget(n_max: u64, budget_bytes: u64) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::Precondition(format!("n_max must be ≥ 2, got {n_max}")));
        }
        if n_max >= u32::MAX as u64 {
            return Err(Error::Capacity(format!("n_max {n_max} exceeds 32-bit table index")));
        }
        let need = n_max.saturating_mul(BYTES_PER_ENTRY);
        if need > budget_bytes {
            return Err(Error::Capacity(format!(
                "n_max {n_max} needs ≈{need} bytes, budget is {budget_bytes}"
            )));
        }

        let len = n_max as usize + 1;
        let mut spf = vec![0u32; len];
        let mut mu = vec![0i8; len];
        let mut phi = vec![0u32; len];
        let mut num_div = vec![0u32; len];
        // exponent of spf[n] in n
        let mut spf_exp = vec![0u8; len];
        let mut primes: Vec<u32> = Vec::with_capacity(len / 10 + 16);

        spf[1] = 1;
        mu[1] = 1;
        phi[1] = 1;
        num_div[1] = 1;
        for i in 2..len {
            if spf[i] == 0 {
                spf[i] = i as u32;
                mu[i] = -1;
                phi[i] = i as u32 - 1;
                num_div[i] = 2;
                spf_exp[i] = 1;
                primes.push(i as u32);
            }
            let si = spf[i];
            for &p in &primes {
                let ip = i * p as usize;
                if p > si || ip >= len {
                    break;
                }
                spf[ip] = p;
                if p == si {
                    mu[ip] = 0;
                    phi[ip] = phi[i] * p;
                    let e = spf_exp[i] as u32;
                    num_div[ip] = num_div[i] / (e + 1) * (e + 2);
                    spf_exp[ip] = spf_exp[i] + 1;
                } else {
                    mu[ip] = -mu[i];
                    phi[ip] = phi[i] * (p - 1);
                    num_div[ip] = num_div[i] * 2;
                    spf_exp[ip] = 1;
                }
            }
        }
        drop(spf_exp);
        drop(primes);

        let mut lambda = vec![0.0f64; len];
        for n in 2..len {
            let p = spf[n] as usize;
            let m = n / p;
            if m == 1 || (spf[m] as usize == p && lambda[m] != 0.0) {
                lambda[n] = (p as f64).ln();
            }
        }

        let mut psi_prefix = vec![0.0f64; len];
        let mut acc = NeumaierSum::new();
        for n in 1..len {
            acc.add(lambda[n]);
            psi_prefix[n] = acc.value();
        }

        Ok(Self {
            n_max,
            spf,
            mu,
            phi,
            lambda,
            num_div,
            psi_prefix,
        })
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    fn check(&self, n: u64) -> Result<()> {
        if n > self.n_max {
            Err(Error::Range(format!("{n} exceeds table bound {}", self.n_max)))
        } else {
            Ok(())
        }
    }

    /// Smallest prime factor; `spf(1) = 1`.
    pub fn spf(&self, n: u64) -> u64 {
        self.spf[n as usize] as u64
    }

    pub fn mu(&self, n: u64) -> i8 {
        self.mu[n as usize]
    }

    pub fn phi(&self, n: u64) -> u64 {
        self.phi[n as usize] as u64
    }

    pub fn num_div(&self, n: u64) -> u64 {
        self.num_div[n as usize] as u64
    }

    /// von Mangoldt `Λ(n)`.
    pub fn lambda(&self, n: u64) -> f64 {
        self.lambda[n as usize]
    }

    /// The prime `p` with `n = p^k`, i.e. the exact form of `Λ(n) = log p`.
    pub fn prime_of_power(&self, n: u64) -> Option<u64> {
        if n >= 2 && self.lambda[n as usize] != 0.0 {
            Some(self.spf(n))
        } else {
            None
        }
    }

    pub fn mu_slice(&self) -> &[i8] {
        &self.mu
    }

    pub fn phi_slice(&self) -> &[u32] {
        &self.phi
    }

    pub fn lambda_slice(&self) -> &[f64] {
        &self.lambda
    }

    pub fn spf_slice(&self) -> &[u32] {
        &self.spf
    }

    /// `ψ(x) = Σ_{n ≤ x} Λ(n)`; zero for `x < 1`. Panics beyond `n_max`.
    pub fn psi(&self, x: i64) -> f64 {
        if x < 1 {
            0.0
        } else {
            self.psi_prefix[x as usize]
        }
    }

    pub fn psi_prefix(&self) -> &[f64] {
        &self.psi_prefix
    }

    /// Factorization of `n ≥ 1` read off the smallest-prime-factor table.
    pub fn factorize(&self, mut n: u64) -> Vec<(u64, u32)> {
        let mut out: Vec<(u64, u32)> = Vec::new();
        while n > 1 {
            let p = self.spf(n);
            let mut e = 0;
            while n.is_multiple_of(p) {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        out
    }

    pub fn sigma(&self, n: u64) -> u64 {
        self.factorize(n).iter().fold(1, |acc, &(p, e)| {
            acc * (p.pow(e + 1) - 1) / (p - 1)
        })
    }

    /// `φ₂` for squarefree `n`, zero for non-squarefree `n`.
    pub fn phi2_or_zero(&self, n: u64) -> i64 {
        if self.mu(n) == 0 {
            return 0;
        }
        let mut out = 1i64;
        let mut m = n;
        while m > 1 {
            let p = self.spf(m);
            out *= p as i64 - 2;
            m /= p;
        }
        out
    }

    /// `ψ(x; q, a) = Σ_{n ≤ x, n ≡ a (mod q)} Λ(n)`.
    pub fn psi_ap(&self, x: i64, q: u64, a: i64) -> Result<f64> {
        if q == 0 {
            return Err(Error::Domain("modulus must be positive".into()));
        }
        if x < 1 {
            return Ok(0.0);
        }
        self.check(x as u64)?;
        let x = x as u64;
        let mut n = a.rem_euclid(q as i64) as u64;
        if n == 0 {
            n = q;
        }
        let mut acc = NeumaierSum::new();
        while n <= x {
            acc.add(self.lambda(n));
            n += q;
        }
        Ok(acc.value())
    }

    /// `E(x; q, a) = ψ(x; q, a) − [(a, q) = 1]·x/φ(q)`.
    pub fn error_in_ap(&self, x: i64, q: u64, a: i64) -> Result<f64> {
        let psi = self.psi_ap(x, q, a)?;
        let coprime = factor::gcd(a, q as i64) == 1;
        let main = if coprime { x as f64 / factor::euler_phi(q) as f64 } else { 0.0 };
        Ok(psi - main)
    }

    /// `Σ_{q ≤ Q} max_{(a,q)=1} |E(x; q, a)|`, an observable for the level of
    /// distribution of primes in progressions.
    pub fn bv_sum(&self, x: i64, big_q: u64) -> Result<f64> {
        if x < 1 {
            return Ok(0.0);
        }
        self.check(x as u64)?;
        let powers: Vec<(u64, f64)> = (2..=x as u64)
            .filter(|&n| self.lambda(n) != 0.0)
            .map(|n| (n, self.lambda(n)))
            .collect();
        let mut total = NeumaierSum::new();
        for q in 1..=big_q {
            let mut buckets = vec![NeumaierSum::new(); q as usize];
            for &(n, l) in &powers {
                buckets[(n % q) as usize].add(l);
            }
            let main = x as f64 / factor::euler_phi(q) as f64;
            let worst = (0..q)
                .filter(|&a| a.gcd(&q) == 1)
                .map(|a| (buckets[a as usize].value() - main).abs())
                .fold(0.0f64, f64::max);
            total.add(worst);
        }
        Ok(total.value())
    }

    pub(crate) fn from_parts(
        n_max: u64,
        spf: Vec<u32>,
        mu: Vec<i8>,
        phi: Vec<u32>,
        lambda: Vec<f64>,
        num_div: Vec<u32>,
        psi_prefix: Vec<f64>,
    ) -> Self {
        Self { n_max, spf, mu, phi, lambda, num_div, psi_prefix }
    }
}
