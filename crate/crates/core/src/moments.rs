//! Moments of `ψ_R` and `ψ` increments over short intervals, their
//! expansions into correlation sums, and the shifted-moment experiment
//! over `N < n ≤ 2N`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, Pow, Zero};
use serde::{Serialize, Serializer};

use crate::approximants::{ApproximantWeights, Truncation};
use crate::arith::ArithTables;
use crate::correlations::{lambda_r_window, lambda_r_window_scaled, product_sum, RangeMode, Window};
use crate::error::{Error, Result};
use crate::numeric::{chunked_sum, chunked_total, rational_to_f64, LogCombination, NeumaierSum, Sample};

/// Upper bound on `(number of correlation sums) × N` for an expansion.
pub const MAX_EXPANSION_WORK: f64 = 2e10;

fn ser_opt_rational<S: Serializer>(v: &Option<BigRational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(q) => s.serialize_some(&q.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    /// `Σ (ψ_R(n+h) − ψ_R(n))^k`
    Truncated,
    /// `Σ (ψ(n+h) − ψ(n))^k`
    Prime,
    /// `Σ (ψ(n+h) − ψ(n) − h)^k`
    Centered,
    /// `Σ (ψ_R(n+h) − ψ_R(n))^{k−1}(ψ(n+h) − ψ(n))`
    Mixed,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub kind: MomentKind,
    pub k: u32,
    pub n: u64,
    pub h: u64,
    pub r: Option<f64>,
    pub r_level: Option<u64>,
    /// `log R / log N`
    pub theta: Option<f64>,
    /// `h / log N`
    pub lambda_param: f64,
    pub computed: f64,
    #[serde(serialize_with = "ser_opt_rational")]
    pub computed_exact: Option<BigRational>,
    pub via_correlations: Option<f64>,
    #[serde(serialize_with = "ser_opt_rational")]
    pub via_correlations_exact: Option<BigRational>,
    /// `computed − via_correlations`
    pub expansion_residual: Option<f64>,
    pub predicted: Option<f64>,
    /// `computed / predicted − 1`
    pub normalized_residual: Option<f64>,
}

impl MomentReport {
    fn new(kind: MomentKind, k: u32, n: u64, h: u64, r: Option<Truncation>, computed: f64) -> Self {
        let log_n = (n as f64).ln();
        Self {
            kind,
            k,
            n,
            h,
            r: r.map(|r| r.real()),
            r_level: r.map(|r| r.level()),
            theta: r.map(|r| r.log() / log_n),
            lambda_param: h as f64 / log_n,
            computed,
            computed_exact: None,
            via_correlations: None,
            via_correlations_exact: None,
            expansion_residual: None,
            predicted: None,
            normalized_residual: None,
        }
    }

    fn with_prediction(mut self, p: Option<f64>) -> Self {
        self.predicted = p;
        self.normalized_residual = p.map(|p| self.computed / p - 1.0);
        self
    }

    fn with_expansion(mut self, v: f64) -> Self {
        self.via_correlations = Some(v);
        self.expansion_residual = Some(self.computed - v);
        self
    }

    /// `|computed − via| / |computed|`.
    pub fn relative_expansion_residual(&self) -> Option<f64> {
        self.expansion_residual.map(|d| d.abs() / self.computed.abs().max(f64::MIN_POSITIVE))
    }

    pub fn exact_agreement(&self) -> Option<bool> {
        match (&self.computed_exact, &self.via_correlations_exact) {
            (Some(a), Some(b)) => Some(a == b),
            _ => None,
        }
    }
}

/// Stirling number of the second kind `{k, r}`.
pub fn stirling2(k: u32, r: u32) -> Result<u64> {
    if !(1 <= r && r <= k && k <= 20) {
        return Err(Error::Range(format!("Stirling numbers need 1 ≤ r ≤ k ≤ 20, got k = {k}, r = {r}")));
    }
    let k = k as usize;
    let mut row = vec![0u64; k + 1];
    row[0] = 1;
    for i in 1..=k {
        for j in (1..=i).rev() {
            row[j] = j as u64 * row[j] + row[j - 1];
        }
        row[0] = 0;
    }
    Ok(row[r as usize])
}

/// Compositions of `k` into `parts` positive parts, lexicographic.
pub fn compositions(k: u32, parts: u32) -> Vec<Vec<u32>> {
    fn rec(left: u32, parts: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 0 {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for a in 1..=left.saturating_sub(parts - 1) {
            cur.push(a);
            rec(left - a, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts >= 1 {
        rec(k, parts, &mut Vec::new(), &mut out);
    }
    out
}

pub fn multinomial(parts: &[u32]) -> u64 {
    let mut acc = 1u64;
    let mut total = 0u64;
    for &a in parts {
        for i in 1..=a as u64 {
            total += 1;
            acc = acc * total / i;
        }
    }
    acc
}

/// Strictly increasing `r`-tuples in `[1, h]`.
fn increasing_tuples(h: u64, r: usize) -> Vec<Vec<i64>> {
    fn rec(start: i64, h: i64, r: usize, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for j in start..=h {
            cur.push(j);
            rec(j + 1, h, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, h as i64, r, &mut Vec::new(), &mut out);
    out
}

fn binomial_f64(n: u64, r: u64) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_expansion_work(n: u64, h: u64, k: u32) -> Result<()> {
    let sums: f64 = (1..=k.min(h as u32))
        .map(|r| binomial_f64(h, r as u64) * binomial_f64(k as u64 - 1, r as u64 - 1))
        .sum();
    if sums * n as f64 > MAX_EXPANSION_WORK {
        return Err(Error::Capacity(format!(
            "expansion needs {sums:.0} correlation sums over N = {n}; reduce h or k"
        )));
    }
    Ok(())
}

/// `Σ_{n∈[lo,hi]} (Σ_{0<m≤h} f(n+m))^k` by summing each window directly.
fn direct_power_sum<T: Sample>(w: &Window<T>, lo: i64, hi: i64, h: u64, k: u32) -> T {
    chunked_total(lo, hi + 1, |n| {
        let inc = T::total((1..=h as i64).map(|m| w.at(n + m).clone()));
        inc.powu(k)
    })
}

/// The same moment grouped by coincidence pattern: multinomial-weighted
/// correlation sums over increasing shift tuples.
fn grouped_power_sum<T: Sample>(w: &Window<T>, lo: i64, hi: i64, h: u64, k: u32) -> T {
    let mut total = T::zero();
    for r in 1..=k.min(h as u32) {
        let comps = compositions(k, r);
        for js in increasing_tuples(h, r as usize) {
            for a in &comps {
                let factors: Vec<_> = js.iter().zip(a).map(|(&j, &a)| (w, j, a)).collect();
                let s = product_sum(lo, hi, &factors);
                total = total + T::from_i64(multinomial(a) as i64) * s;
            }
        }
    }
    total
}

/// Leading-order prediction for the truncated moments, `k ≤ 3`.
fn truncated_prediction(n: u64, h: u64, r: Truncation, k: u32) -> Option<f64> {
    let (n, h, l) = (n as f64, h as f64, r.log());
    match k {
        1 => Some(n * h),
        2 => Some(n * h * h + n * h * l),
        3 => Some(n * h.powi(3) + 3.0 * n * h * h * l + 0.75 * n * h * l * l),
        _ => None,
    }
}

/// Prediction for the mixed moments, `k ≤ 3`.
fn mixed_prediction(n: u64, h: u64, r: Truncation, k: u32) -> Option<f64> {
    let (n, h, l) = (n as f64, h as f64, r.log());
    match k {
        1 => Some(n * h),
        2 => Some(n * h * h + n * h * l),
        3 => Some(n * h.powi(3) + 3.0 * n * h * h * l + n * h * l * l),
        _ => None,
    }
}

/// `M_k(N, h, ψ_R)` in floating point, summed directly.
pub fn moment_psi_r(n: u64, h: u64, r: Truncation, k: u32) -> Result<MomentReport> {
    check_moment_args(n, h, k)?;
    let weights = ApproximantWeights::new(r.level())?;
    let w = lambda_r_window(&weights, 1, (n + h) as i64);
    let computed = direct_power_sum(&w, 1, n as i64, h, k);
    Ok(MomentReport::new(MomentKind::Truncated, k, n, h, Some(r), computed)
        .with_prediction(truncated_prediction(n, h, r, k)))
}

/// `M_k(N, h, ψ_R)` with its correlation expansion, both in floating point.
pub fn expand_via_correlations(n: u64, h: u64, r: Truncation, k: u32) -> Result<MomentReport> {
    check_moment_args(n, h, k)?;
    check_expansion_work(n, h, k)?;
    let weights = ApproximantWeights::new(r.level())?;
    let w = lambda_r_window(&weights, 1, (n + h) as i64);
    let computed = direct_power_sum(&w, 1, n as i64, h, k);
    let grouped = grouped_power_sum(&w, 1, n as i64, h, k);
    Ok(MomentReport::new(MomentKind::Truncated, k, n, h, Some(r), computed)
        .with_expansion(grouped)
        .with_prediction(truncated_prediction(n, h, r, k)))
}

/// `M_k(N, h, ψ_R)` and its correlation expansion as exact rationals.
pub fn moment_psi_r_exact(n: u64, h: u64, r_level: u64, k: u32) -> Result<MomentReport> {
    check_moment_args(n, h, k)?;
    check_expansion_work(n, h, k)?;
    let r = Truncation::integer(r_level);
    let weights = ApproximantWeights::new_exact(r_level)?;
    let den = weights.exact().expect("exact weights").denominator.clone();
    let scale: BigInt = Pow::pow(den, k);
    let w = lambda_r_window_scaled(&weights, 1, (n + h) as i64)?;
    let direct = BigRational::new(direct_power_sum(&w, 1, n as i64, h, k), scale.clone());
    let grouped = BigRational::new(grouped_power_sum(&w, 1, n as i64, h, k), scale);
    let mut rep = MomentReport::new(MomentKind::Truncated, k, n, h, Some(r), rational_to_f64(&direct))
        .with_expansion(rational_to_f64(&grouped))
        .with_prediction(truncated_prediction(n, h, r, k));
    rep.computed_exact = Some(direct);
    rep.via_correlations_exact = Some(grouped);
    Ok(rep)
}

fn check_moment_args(n: u64, h: u64, k: u32) -> Result<()> {
    if n < 1 || h < 1 || k < 1 {
        return Err(Error::Precondition(format!("need N, h, k ≥ 1, got N = {n}, h = {h}, k = {k}")));
    }
    Ok(())
}

fn check_table(tables: &ArithTables, hi: u64) -> Result<()> {
    if hi > tables.n_max() {
        return Err(Error::Range(format!("argument {hi} exceeds table bound {}", tables.n_max())));
    }
    Ok(())
}

/// `ψ(n + h) − ψ(n)` from the prefix table.
#[inline]
fn psi_increment(tables: &ArithTables, n: i64, h: u64) -> f64 {
    tables.psi(n + h as i64) - tables.psi(n)
}

/// `M_k(N, h, ψ)` with the prediction `N(log N)^k Σ_r {k,r} λ^r`, `λ = h/log N`.
pub fn moment_psi(tables: &ArithTables, n: u64, h: u64, k: u32) -> Result<MomentReport> {
    check_moment_args(n, h, k)?;
    check_table(tables, n + h)?;
    let computed = chunked_sum(1, n as i64 + 1, |m| psi_increment(tables, m, h).powi(k as i32));
    let log_n = (n as f64).ln();
    let lam = h as f64 / log_n;
    let predicted = if k <= 20 {
        let mut s = 0.0;
        for r in 1..=k {
            s += stirling2(k, r)? as f64 * lam.powi(r as i32);
        }
        Some(n as f64 * log_n.powi(k as i32) * s)
    } else {
        None
    };
    Ok(MomentReport::new(MomentKind::Prime, k, n, h, None, computed).with_prediction(predicted))
}

/// `μ_k(N, h) = Σ (ψ(n+h) − ψ(n) − h)^k`.
///
/// For even `k` the prediction `(k−1)!! N (h log(N/h))^{k/2}` is attached.
pub fn mu_k(tables: &ArithTables, n: u64, h: u64, k: u32) -> Result<MomentReport> {
    check_moment_args(n, h, k)?;
    check_table(tables, n + h)?;
    let hf = h as f64;
    let computed = chunked_sum(1, n as i64 + 1, |m| (psi_increment(tables, m, h) - hf).powi(k as i32));
    let predicted = (k.is_multiple_of(2) && h < n).then(|| {
        let double_fact: f64 = (1..k).step_by(2).map(|i| i as f64).product();
        double_fact * n as f64 * (hf * (n as f64 / hf).ln()).powf(k as f64 / 2.0)
    });
    Ok(MomentReport::new(MomentKind::Centered, k, n, h, None, computed).with_prediction(predicted))
}

/// Three evaluations of `M_1(N, h, ψ)`.
#[derive(Clone, Debug, Serialize)]
pub struct FirstMomentIdentity {
    pub n: u64,
    pub h: u64,
    /// `Σ_n Σ_{n<m≤n+h} Λ(m)` as an exact combination of prime logarithms.
    #[serde(serialize_with = "ser_display")]
    pub direct: LogCombination,
    /// `Σ_{m≤h}(m−1)Λ(m) + hΣ_{h<m≤N}Λ(m) + Σ_{N<m≤N+h}(N+h−m+1)Λ(m)`.
    #[serde(serialize_with = "ser_display")]
    pub split: LogCombination,
    /// `ψ(N+h) − ψ(N) − ψ(h) − ∫_2^h ψ + ∫_N^{N+h} ψ`, exact for integer limits.
    #[serde(serialize_with = "ser_display")]
    pub integral_form: LogCombination,
    pub direct_value: f64,
    /// `Nh + E(N+h) − E(N) − E(h) − ∫_2^h E + ∫_N^{N+h} E` with `E(t) = ψ(t) − t`.
    pub error_form: f64,
    /// `direct − error_form`; the bounded remainder, equal to 2.
    pub error_form_offset: f64,
}

fn ser_display<S: Serializer, T: std::fmt::Display>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl FirstMomentIdentity {
    pub fn split_exact(&self) -> bool {
        self.direct == self.split
    }

    pub fn integral_exact(&self) -> bool {
        self.direct == self.integral_form
    }
}

pub fn first_moment_identity(tables: &ArithTables, n: u64, h: u64) -> Result<FirstMomentIdentity> {
    if h < 1 || h > n {
        return Err(Error::Precondition(format!("need 1 ≤ h ≤ N, got h = {h}, N = {n}")));
    }
    check_table(tables, n + h)?;
    let top = (n + h) as usize;
    let prime_of = |m: u64| tables.prime_of_power(m);

    let mut direct = vec![0i128; top + 1];
    for start in 1..=n {
        for m in start + 1..=start + h {
            if let Some(p) = prime_of(m) {
                direct[p as usize] += 1;
            }
        }
    }

    let mut split = vec![0i128; top + 1];
    for m in 2..=n + h {
        let Some(p) = prime_of(m) else { continue };
        let c = if m <= h {
            m as i128 - 1
        } else if m <= n {
            h as i128
        } else {
            (n + h - m + 1) as i128
        };
        split[p as usize] += c;
    }

    // ∫_a^b ψ = Σ_{a≤t<b} ψ(t), so Λ(m) is weighted by max(0, b − max(a, m))
    let integral = |a: u64, b: u64, m: u64| -> i128 {
        let forward = |a: u64, b: u64| (b as i128 - a.max(m) as i128).max(0);
        if b >= a {
            forward(a, b)
        } else {
            -forward(b, a)
        }
    };
    let mut form3 = vec![0i128; top + 1];
    for m in 2..=n + h {
        let Some(p) = prime_of(m) else { continue };
        let mut c = (m <= n + h) as i128 - (m <= n) as i128 - (m <= h) as i128;
        c -= integral(2, h, m);
        c += integral(n, n + h, m);
        form3[p as usize] += c;
    }

    let direct = LogCombination::from_dense(&direct);
    let split = LogCombination::from_dense(&split);
    let integral_form = LogCombination::from_dense(&form3);
    let direct_value = direct.eval();

    let (nf, hf) = (n as f64, h as f64);
    let e = |t: u64| tables.psi(t as i64) - t as f64;
    let psi_integral = |a: u64, b: u64| -> f64 {
        if b >= a {
            (a..b).map(|t| tables.psi(t as i64)).collect::<NeumaierSum>().value()
        } else {
            -(b..a).map(|t| tables.psi(t as i64)).collect::<NeumaierSum>().value()
        }
    };
    let e_integral = |a: u64, b: u64| psi_integral(a, b) - ((b as f64).powi(2) - (a as f64).powi(2)) / 2.0;
    let error_form = [nf * hf, e(n + h), -e(n), -e(h), -e_integral(2, h), e_integral(n, n + h)]
        .into_iter()
        .collect::<NeumaierSum>()
        .value();

    Ok(FirstMomentIdentity {
        n,
        h,
        direct,
        split,
        integral_form,
        direct_value,
        error_form,
        error_form_offset: direct_value - error_form,
    })
}

/// `M̃_k(N, h, ψ_R) = Σ (ψ_R(n+h) − ψ_R(n))^{k−1}(ψ(n+h) − ψ(n))`, with
/// `M̃_1 = M_1(N, h, ψ)`.
///
/// The expansion replaces `λ_R(m)` by `𝓛_1(R)` wherever the von Mangoldt
/// factor sits at the same `m`; it drops the prime-power corrections, so the
/// residual is reported rather than required to vanish.
pub fn mixed_moment(tables: &ArithTables, n: u64, h: u64, r: Truncation, k: u32) -> Result<MomentReport> {
    check_moment_args(n, h, k)?;
    check_table(tables, n + h)?;
    let weights = ApproximantWeights::new(r.level())?;
    let w = lambda_r_window(&weights, 1, (n + h) as i64);
    let l1 = weights.weight_f64(1);
    let e = k as i32 - 1;
    let hi = h as i64;
    let computed = chunked_sum(1, n as i64 + 1, |m| {
        let s: f64 = (1..=hi).map(|j| *w.at(m + j)).collect::<NeumaierSum>().value();
        s.powi(e) * psi_increment(tables, m, h)
    });
    let expansion = chunked_sum(1, n as i64 + 1, |m| {
        let s: f64 = (1..=hi).map(|j| *w.at(m + j)).collect::<NeumaierSum>().value();
        (1..=hi)
            .map(|j| {
                let big = tables.lambda((m + j) as u64);
                if big == 0.0 {
                    0.0
                } else {
                    big * (s - *w.at(m + j) + l1).powi(e)
                }
            })
            .collect::<NeumaierSum>()
            .value()
    });
    Ok(MomentReport::new(MomentKind::Mixed, k, n, h, Some(r), computed)
        .with_expansion(expansion)
        .with_prediction(mixed_prediction(n, h, r, k)))
}

/// The shifted mixed moments `ℳ′_k`, `k = 1, 2, 3`, over `N < n ≤ 2N`.
#[derive(Clone, Debug, Serialize)]
pub struct OmegaExperiment {
    pub n: u64,
    pub h: u64,
    pub r: f64,
    pub r_level: u64,
    pub rho: f64,
    pub c: f64,
    /// `(h log N)^{1/2}`
    pub a: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m1_expanded: f64,
    pub m2_expanded: f64,
    pub m3_expanded: f64,
    /// Direct and expanded sums agree exactly once every input is read as
    /// the dyadic rational it stores.
    pub exact_agreement: bool,
    pub predicted_m1: f64,
    pub predicted_m2: f64,
    pub predicted_m3: f64,
    /// True when `h` is below `log^14 N`, where the asymptotics are proven.
    pub outside_proven_regime: bool,
    pub pieces: OmegaPieces,
}

/// The ordinary moments over `N < n ≤ 2N` that the expansions combine.
#[derive(Clone, Debug, Serialize)]
pub struct OmegaPieces<T = f64> {
    /// `Σ X`, `X = ψ_R(n+h) − ψ_R(n)`
    pub m1_r: T,
    /// `Σ Y`, `Y = ψ(n+h) − ψ(n)`
    pub m1_psi: T,
    /// `Σ X²`
    pub m2_r: T,
    /// `Σ XY`
    pub mixed2: T,
    /// `Σ X²Y`
    pub mixed3: T,
}

impl OmegaExperiment {
    pub fn relative_residuals(&self) -> [f64; 3] {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE);
        [rel(self.m1, self.m1_expanded), rel(self.m2, self.m2_expanded), rel(self.m3, self.m3_expanded)]
    }
}

/// `C = −(θ − α)/ρ` with `R = N^θ`, `h = N^α`.
pub fn coupled_c(n: u64, h: u64, r: Truncation, rho: f64) -> Result<f64> {
    if rho == 0.0 {
        return Err(Error::Domain("coupling needs ρ ≠ 0".into()));
    }
    let log_n = (n as f64).ln();
    let theta = r.log() / log_n;
    let alpha = (h as f64).ln() / log_n;
    Ok(-(theta - alpha) / rho)
}

/// `−ρ(θ − α)(1 − (θ − α)/ρ²) N h^{3/2} log^{3/2} N`, the third moment
/// under the coupling of [`coupled_c`].
pub fn coupled_m3_prediction(n: u64, h: u64, r: Truncation, rho: f64) -> f64 {
    let log_n = (n as f64).ln();
    let d = r.log() / log_n - (h as f64).ln() / log_n;
    -rho * d * (1.0 - d / (rho * rho)) * n as f64 * (h as f64).powf(1.5) * log_n.powf(1.5)
}

fn dyadic_exponent(x: f64) -> i32 {
    if x == 0.0 {
        return 0;
    }
    let (_, exp, _) = x.integer_decode();
    (-(exp as i32)).max(0)
}

fn to_scaled(x: f64, shift: i32) -> BigInt {
    if x == 0.0 {
        return BigInt::zero();
    }
    let (mant, exp, sign) = x.integer_decode();
    let v = BigInt::from(mant) << ((exp as i32 + shift) as usize);
    if sign < 0 {
        -v
    } else {
        v
    }
}

pub fn omega_experiment(tables: &ArithTables, n: u64, h: u64, rho: f64, c: f64, r: Truncation) -> Result<OmegaExperiment> {
    check_moment_args(n, h, 1)?;
    let log_n = (n as f64).ln();
    let a = (h as f64 * log_n).sqrt();
    if a >= h as f64 {
        return Err(Error::Precondition(format!("need A = (h log N)^(1/2) < h, got A = {a:.3}, h = {h}")));
    }
    check_table(tables, 2 * n + h)?;
    let (lo, hi) = RangeMode::Primed.bounds(n);
    let weights = ApproximantWeights::new(r.level())?;
    let w = lambda_r_window(&weights, lo, hi + h as i64);
    let hh = h as i64;
    let xs: Vec<f64> = (lo..=hi)
        .map(|m| (1..=hh).map(|j| *w.at(m + j)).collect::<NeumaierSum>().value())
        .collect();
    let ys: Vec<f64> = (lo..=hi).map(|m| psi_increment(tables, m, h)).collect();

    let hf = h as f64;
    let u = hf + c * a;
    let v = hf + rho * a;
    let [m1, m2, m3] = direct_moments(&xs, &ys, &u, &v);
    let pieces = pieces_of(&xs, &ys);
    let nf = n as f64;
    let m1_expanded = pieces.m1_psi - v * nf;
    let m2_expanded = expand2(&pieces, &u, &v, &nf);
    let m3_expanded = expand3(&pieces, &u, &v, &nf);

    let exact_agreement = omega_exact_check(&xs, &ys, u, v, n);

    let log_rh = r.log() - hf.ln();
    Ok(OmegaExperiment {
        n,
        h,
        r: r.real(),
        r_level: r.level(),
        rho,
        c,
        a,
        m1,
        m2,
        m3,
        m1_expanded,
        m2_expanded,
        m3_expanded,
        exact_agreement,
        predicted_m1: -rho * a * nf,
        predicted_m2: nf * hf * (rho * c * log_n + log_rh),
        predicted_m3: -nf * hf.powf(1.5) * log_n.sqrt() * (rho * c * c * log_n + (2.0 * c + rho) * log_rh),
        outside_proven_regime: hf < log_n.powi(14),
        pieces,
    })
}

fn expand2<T: Sample>(p: &OmegaPieces<T>, u: &T, v: &T, n: &T) -> T {
    p.mixed2.clone() - v.clone() * p.m1_r.clone() - u.clone() * p.m1_psi.clone() + v.clone() * u.clone() * n.clone()
}

fn expand3<T: Sample>(p: &OmegaPieces<T>, u: &T, v: &T, n: &T) -> T {
    let two = T::from_i64(2);
    p.mixed3.clone() - v.clone() * p.m2_r.clone() - two.clone() * u.clone() * p.mixed2.clone()
        + two * u.clone() * v.clone() * p.m1_r.clone()
        + u.clone() * u.clone() * p.m1_psi.clone()
        - v.clone() * u.clone() * u.clone() * n.clone()
}

fn pieces_of<T: Sample>(xs: &[T], ys: &[T]) -> OmegaPieces<T> {
    let len = xs.len() as i64;
    let sum = |f: &(dyn Fn(usize) -> T + Sync)| chunked_total(0, len, |i| f(i as usize));
    OmegaPieces {
        m1_r: sum(&|i| xs[i].clone()),
        m1_psi: sum(&|i| ys[i].clone()),
        m2_r: sum(&|i| xs[i].clone() * xs[i].clone()),
        mixed2: sum(&|i| xs[i].clone() * ys[i].clone()),
        mixed3: sum(&|i| xs[i].clone() * xs[i].clone() * ys[i].clone()),
    }
}

fn direct_moments<T: Sample>(xs: &[T], ys: &[T], u: &T, v: &T) -> [T; 3] {
    let len = xs.len() as i64;
    let sum = |f: &(dyn Fn(usize) -> T + Sync)| chunked_total(0, len, |i| f(i as usize));
    [
        sum(&|i| ys[i].clone() - v.clone()),
        sum(&|i| (xs[i].clone() - u.clone()) * (ys[i].clone() - v.clone())),
        sum(&|i| {
            let d = xs[i].clone() - u.clone();
            d.clone() * d * (ys[i].clone() - v.clone())
        }),
    ]
}

/// Repeats the direct sums and the expansions in integer arithmetic, every
/// input scaled by a common power of two so that no rounding occurs.
fn omega_exact_check(xs: &[f64], ys: &[f64], u: f64, v: f64, n: u64) -> bool {
    let shift = xs
        .iter()
        .chain(ys)
        .chain([&u, &v])
        .map(|&x| dyadic_exponent(x))
        .max()
        .unwrap_or(0);
    let xs: Vec<BigInt> = xs.iter().map(|&x| to_scaled(x, shift)).collect();
    let ys: Vec<BigInt> = ys.iter().map(|&y| to_scaled(y, shift)).collect();
    let (u, v) = (to_scaled(u, shift), to_scaled(v, shift));
    let direct = direct_moments(&xs, &ys, &u, &v);
    let p = pieces_of(&xs, &ys);
    let n = BigInt::from(n);
    let m1 = p.m1_psi.clone() - v.clone() * n.clone();
    let m2 = expand2(&p, &u, &v, &n);
    let m3 = expand3(&p, &u, &v, &n);
    direct[0] == m1 && direct[1] == m2 && direct[2] == m3
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tables() -> ArithTables {
        ArithTables::build(30_000).unwrap()
    }

    #[test]
    fn stirling_values() {
        assert_eq!(stirling2(3, 2).unwrap(), 3);
        for k in 1..=20 {
            assert_eq!(stirling2(k, 1).unwrap(), 1);
            assert_eq!(stirling2(k, k).unwrap(), 1);
        }
        // x^4 = Σ_r {4,r} x(x−1)⋯(x−r+1) at x = 2
        let falling = |x: i64, r: u32| (0..r as i64).map(|i| x - i).product::<i64>();
        let s: i64 = (1..=4).map(|r| stirling2(4, r).unwrap() as i64 * falling(2, r)).sum();
        assert_eq!(s, 16);
        assert!(stirling2(21, 3).is_err());
        assert!(stirling2(3, 0).is_err());
        assert!(stirling2(2, 3).is_err());
    }

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(3, 1), vec![vec![3]]);
        assert_eq!(compositions(3, 2), vec![vec![1, 2], vec![2, 1]]);
        assert_eq!(compositions(3, 3), vec![vec![1, 1, 1]]);
        assert_eq!(multinomial(&[1, 2]), 3);
        assert_eq!(multinomial(&[1, 1, 1]), 6);
        assert_eq!(multinomial(&[2, 2]), 6);
    }

    #[test]
    fn grouping_identity_small_exact() {
        for k in 1..=3 {
            let rep = moment_psi_r_exact(400, 4, 12, k).unwrap();
            assert_eq!(rep.exact_agreement(), Some(true), "k = {k}");
        }
    }

    #[test]
    fn grouping_identity_float() {
        let rep = expand_via_correlations(2000, 6, Truncation::integer(30), 3).unwrap();
        assert!(rep.relative_expansion_residual().unwrap() < 1e-12);
        assert!(rep.computed >= 0.0);
    }

    #[test]
    fn first_moment_forms() {
        let t = tables();
        for (n, h) in [(50, 1), (200, 7), (1000, 37), (1000, 1000)] {
            let id = first_moment_identity(&t, n, h).unwrap();
            assert!(id.split_exact(), "split N = {n}, h = {h}");
            assert!(id.integral_exact(), "integral N = {n}, h = {h}");
            assert!((id.error_form_offset - 2.0).abs() < 1e-6, "{}", id.error_form_offset);
        }
        let id = first_moment_identity(&t, 100, 1).unwrap();
        let shifted: f64 = (2..=101u64).map(|m| t.lambda(m)).sum();
        assert!((id.direct_value - shifted).abs() < 1e-9);
        assert!(first_moment_identity(&t, 10, 11).is_err());
    }

    #[test]
    fn mixed_first_moment_is_prime_moment() {
        let t = tables();
        let mixed = mixed_moment(&t, 5000, 8, Truncation::integer(20), 1).unwrap();
        let pure = moment_psi(&t, 5000, 8, 1).unwrap();
        assert!((mixed.computed - pure.computed).abs() < 1e-6);
    }

    fn literal_mixed_expansion(t: &ArithTables, n: u64, h: u64, r_level: u64, k: u32) -> f64 {
        let w = ApproximantWeights::new(r_level).unwrap();
        let lam = w.range_f64(0, (n + h) as i64);
        let l1 = w.weight_f64(1);
        let big = |m: i64| t.lambda(m as u64);
        let hh = h as i64;
        let mut total = 0.0;
        for r in 2..=k {
            let fact: f64 = (1..r).map(|i| i as f64).product();
            for a in compositions(k - 1, r - 1) {
                let coeff = multinomial(&a) as f64 / fact;
                // ordered distinct λ shifts
                let mut tuples = vec![vec![]];
                for _ in 0..r - 1 {
                    let mut next = Vec::new();
                    for tup in &tuples {
                        for j in 1..=hh {
                            if !tup.contains(&j) {
                                let mut t2: Vec<i64> = tup.clone();
                                t2.push(j);
                                next.push(t2);
                            }
                        }
                    }
                    tuples = next;
                }
                for js in &tuples {
                    for m in 1..=n as i64 {
                        let prod_except = |skip: Option<usize>| {
                            js.iter()
                                .zip(&a)
                                .enumerate()
                                .filter(|(i, _)| Some(*i) != skip)
                                .map(|(_, (&j, &e))| lam[(m + j) as usize].powi(e as i32))
                                .product::<f64>()
                        };
                        for (i, &j) in js.iter().enumerate() {
                            total += coeff * l1.powi(a[i] as i32) * prod_except(Some(i)) * big(m + j);
                        }
                        for jr in 1..=hh {
                            if !js.contains(&jr) {
                                total += coeff * prod_except(None) * big(m + jr);
                            }
                        }
                    }
                }
            }
        }
        total
    }

    #[test]
    fn mixed_expansion_matches_tuple_form() {
        let t = tables();
        for k in 2..=3 {
            let rep = mixed_moment(&t, 300, 4, Truncation::integer(10), k).unwrap();
            let lit = literal_mixed_expansion(&t, 300, 4, 10, k);
            let via = rep.via_correlations.unwrap();
            assert!((via - lit).abs() <= 1e-9 * lit.abs(), "k = {k}: {via} vs {lit}");
        }
    }

    #[test]
    fn omega_degenerate_parameters() {
        let t = tables();
        let res = omega_experiment(&t, 5000, 40, 0.0, 0.0, Truncation::integer(50)).unwrap();
        let (lo, hi) = RangeMode::Primed.bounds(5000);
        let m1: f64 = (lo..=hi).map(|m| t.psi(m + 40) - t.psi(m)).sum::<f64>() - 40.0 * 5000.0;
        assert!((res.m1 - m1).abs() < 1e-6);
        assert!(res.exact_agreement);
        for d in res.relative_residuals() {
            assert!(d < 1e-9);
        }
        assert!(res.outside_proven_regime);
    }

    #[test]
    fn omega_expansions_agree() {
        let t = tables();
        let res = omega_experiment(&t, 10_000, 60, 0.3, -0.5, Truncation::integer(200)).unwrap();
        assert!(res.exact_agreement);
        for d in res.relative_residuals() {
            assert!(d < 1e-9, "{d}");
        }
    }

    #[test]
    fn omega_needs_a_below_h() {
        let t = tables();
        assert!(matches!(
            omega_experiment(&t, 10_000, 5, 0.3, -0.5, Truncation::integer(100)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn coupling_preset() {
        let r = Truncation::integer(1000);
        let c = coupled_c(100_000, 50, r, 0.3).unwrap();
        let log_n = (100_000f64).ln();
        let d = r.log() / log_n - 50f64.ln() / log_n;
        assert!((c + d / 0.3).abs() < 1e-12);
        assert!(coupled_c(100_000, 50, r, 0.0).is_err());
    }

    #[test]
    fn centered_first_moment_small() {
        let t = tables();
        let rep = mu_k(&t, 20_000, 50, 1).unwrap();
        assert!(rep.computed.abs() / 20_000.0 < 5.0);
        assert!(rep.predicted.is_none());
        assert!(mu_k(&t, 20_000, 50, 2).unwrap().predicted.is_some());
    }
}
