//! Table-free integer helpers based on trial division.
//!
//! These serve small arguments (shifts, truncation levels, kernel moduli) and
//! act as the independent route for checks against the sieved tables.

use num_integer::Integer;

/// Prime factorization of `n > 0` as `(p, e)` pairs in increasing `p`.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    assert!(n > 0, "factorize(0)");
    let mut out = Vec::new();
    let mut push = |p: u64, n: &mut u64| {
        let mut e = 0;
        while (*n).is_multiple_of(p) {
            *n /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
    };
    push(2, &mut n);
    push(3, &mut n);
    let mut p = 5;
    while p * p <= n {
        push(p, &mut n);
        push(p + 2, &mut n);
        p += 6;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn distinct_primes(n: u64) -> Vec<u64> {
    factorize(n).into_iter().map(|(p, _)| p).collect()
}

pub fn is_prime(n: u64) -> bool {
    n >= 2 && factorize(n) == [(n, 1)]
}

pub fn is_squarefree(n: u64) -> bool {
    n > 0 && factorize(n).iter().all(|&(_, e)| e == 1)
}

pub fn mobius(n: u64) -> i64 {
    let f = factorize(n);
    if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

pub fn euler_phi(n: u64) -> u64 {
    factorize(n)
        .iter()
        .fold(n, |acc, &(p, _)| acc / p * (p - 1))
}

pub fn sigma(n: u64) -> u64 {
    factorize(n).iter().fold(1, |acc, &(p, e)| {
        let mut s = 1;
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            s += pk;
        }
        acc * s
    })
}

pub fn num_divisors(n: u64) -> u64 {
    factorize(n).iter().map(|&(_, e)| e as u64 + 1).product()
}

/// All positive divisors of `n`, sorted.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut ds = vec![1u64];
    for (p, e) in factorize(n) {
        let len = ds.len();
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            for i in 0..len {
                ds.push(ds[i] * pk);
            }
        }
    }
    ds.sort_unstable();
    ds
}

/// Squarefree divisors of `n`, sorted.
pub fn squarefree_divisors(n: u64) -> Vec<u64> {
    let mut ds = vec![1u64];
    for p in distinct_primes(n) {
        let len = ds.len();
        for i in 0..len {
            ds.push(ds[i] * p);
        }
    }
    ds.sort_unstable();
    ds
}

/// Standard gcd on signed integers, `gcd(0, a) = |a|`.
pub fn gcd(a: i64, b: i64) -> u64 {
    (a as i128).gcd(&(b as i128)) as u64
}

pub fn lcm(a: u64, b: u64) -> u64 {
    a.lcm(&b)
}

/// Gcd under the convention `(0, a) = 0` for `a ≠ 0` used by some closed
/// forms. Only call this where a formula is stated with that convention;
/// everything else uses [`gcd`].
pub fn gcd_zero_absorbing(a: i64, b: i64) -> u64 {
    if (a == 0) != (b == 0) {
        0
    } else {
        gcd(a, b)
    }
}
