//! Command-line front end: one experiment per invocation, written as CSV
//! with a config header line or as a JSON document.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::approximants::{biglambda_r, ApproximantWeights, Truncation};
use crate::arith::ArithTables;
use crate::constants::{DEFAULT_LEMMA_P_CUT, DEFAULT_SINGULAR_P_CUT};
use crate::correlations::{s_k, s_k_rational, s_tilde_k, RangeMode};
use crate::error::Error;
use crate::lemmas::{self, MonicPolyPair};
use crate::moments::{self, coupled_c, coupled_m3_prediction};
use crate::singular::{self, ShiftPattern};

/// Version of the CSV column layout and the JSON document shape.
pub const SCHEMA_VERSION: u32 = 1;

/// Directory for cached sieve tables.
pub const CACHE_ENV: &str = "DIVCORR_TABLE_CACHE";

/// Relative tolerance for floating point rearrangement identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

pub mod exit {
    pub const OK: i32 = 0;
    pub const IDENTITY_FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const PRECONDITION: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Parser, Debug)]
#[command(name = "divcorr", version, about = "Truncated divisor sum and prime correlation experiments")]
pub struct Cli {
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file (standard output if omitted).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
#[group(required = false, multiple = false)]
pub struct TruncationArgs {
    /// Truncation level R.
    #[arg(long = "r-level")]
    pub r_level: Option<f64>,
    /// Truncation exponent θ, giving R = N^θ.
    #[arg(long = "r-exp")]
    pub r_exp: Option<f64>,
}

impl TruncationArgs {
    fn resolve(&self, n: u64) -> Result<Truncation, CliError> {
        match (self.r_level, self.r_exp) {
            (Some(r), _) => Ok(Truncation::new(r)?),
            (None, Some(t)) => Ok(Truncation::power(n, t)?),
            (None, None) => Err(CliError::Config("one of --r-level or --r-exp is required".into())),
        }
    }

    fn is_set(&self) -> bool {
        self.r_level.is_some() || self.r_exp.is_some()
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sieved arithmetic tables.
    Sieve {
        #[arg(long, value_parser = parse_count)]
        n: u64,
        #[arg(long, value_parser = parse_count, default_value = "1")]
        from: u64,
        /// Last row (defaults to min(n, 1000)).
        #[arg(long, value_parser = parse_count)]
        to: Option<u64>,
    },
    /// Truncated divisor sums over a range of n.
    Lambda {
        #[command(flatten)]
        r: TruncationArgs,
        #[arg(long, value_parser = parse_count, default_value = "1")]
        from: u64,
        #[arg(long, value_parser = parse_count)]
        to: u64,
        /// Also print exact rational values.
        #[arg(long)]
        exact: bool,
    },
    /// Singular series and their averages.
    Singular {
        /// Comma separated shifts, e.g. 0,2,6.
        #[arg(long, allow_hyphen_values = true)]
        shifts: Option<String>,
        /// Σ_{j≤h}(h−j)𝔖₂(j) against its main term.
        #[arg(long, value_parser = parse_count)]
        weighted_sum: Option<u64>,
        /// Tuple average R_r(h); needs --h.
        #[arg(long)]
        r_stat: Option<u32>,
        #[arg(long, value_parser = parse_count)]
        h: Option<u64>,
        #[arg(long, value_parser = parse_count, default_value_t = DEFAULT_SINGULAR_P_CUT)]
        p_cut: u64,
    },
    /// Correlations of shifted λ_R values.
    Correlate {
        /// One or more range lengths, comma separated.
        #[arg(long, value_parser = parse_count, value_delimiter = ',', required = true)]
        n: Vec<u64>,
        #[command(flatten)]
        r: TruncationArgs,
        /// shift:multiplicity pairs, e.g. 0:1,2:1.
        #[arg(long, allow_hyphen_values = true)]
        pattern: String,
        /// Put the von Mangoldt function in the last slot.
        #[arg(long)]
        mixed: bool,
        /// Sum over N < n ≤ 2N.
        #[arg(long)]
        primed_range: bool,
        /// Exact rational arithmetic (integer R only).
        #[arg(long)]
        exact: bool,
        /// Level-of-distribution exponent, recorded with the admissible R range.
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
    },
    /// Moments of ψ_R and ψ increments.
    Moments {
        #[arg(long, value_parser = parse_count, value_delimiter = ',', required = true)]
        n: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, value_parser = parse_count, conflicts_with = "lambda")]
        h: Option<u64>,
        /// h = round(λ log N).
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        r: TruncationArgs,
        /// Σ (ψ(n+h) − ψ(n) − h)^k.
        #[arg(long)]
        centered: bool,
        /// Σ (ψ(n+h) − ψ(n))^k.
        #[arg(long)]
        psi: bool,
        /// Σ (ψ_R increment)^{k−1}(ψ increment).
        #[arg(long)]
        mixed: bool,
        /// Recompute through correlation sums.
        #[arg(long)]
        expand: bool,
        /// Exact rational arithmetic (integer R only).
        #[arg(long)]
        exact: bool,
        /// The first moment of ψ increments in three rearranged forms.
        #[arg(long)]
        first_moment: bool,
        /// Shifted moments with "rho=..,C=.." (C=coupled for the coupling preset).
        #[arg(long, allow_hyphen_values = true)]
        omega: Option<String>,
    },
    /// Multiplicative sums against their main terms.
    Lemma {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        which: u8,
        #[arg(long, value_parser = parse_count, value_delimiter = ',', required = true)]
        ladder: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        k: u64,
        #[arg(long, default_value_t = 2, allow_hyphen_values = true)]
        j: i64,
        /// Weight by log(x/n) where supported.
        #[arg(long)]
        log_weighted: bool,
        /// Polynomial pair "c0,c1;d0,d1,d2" (constant term first).
        #[arg(long, allow_hyphen_values = true)]
        pair: Option<String>,
    },
    /// Shifted mixed moments over N < n ≤ 2N.
    Omega {
        #[arg(long, value_parser = parse_count)]
        n: u64,
        #[arg(long, value_parser = parse_count)]
        h: u64,
        #[command(flatten)]
        r: TruncationArgs,
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
        #[arg(long, allow_hyphen_values = true, conflicts_with = "coupled")]
        c: Option<f64>,
        /// C = −(θ − α)/ρ.
        #[arg(long)]
        coupled: bool,
    },
}

/// Accepts plain integers and exact floating forms such as `1e6`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let x: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if !(x >= 0.0) || x.fract() != 0.0 || x > 9.007_199_254_740_992e15 {
        return Err(format!("not a non-negative integer: {s:?}"));
    }
    Ok(x as u64)
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(Error),
    Identity(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Identity(_) => exit::IDENTITY_FAILURE,
            CliError::Lib(Error::Io(_)) | CliError::Lib(Error::Cache(_)) => exit::IO,
            CliError::Lib(_) => exit::PRECONDITION,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Identity(m) => write!(f, "identity check failed: {m}"),
        }
    }
}

/// Result of one command, ready to be rendered.
pub struct Report {
    pub config: Value,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
    pub records: Vec<Value>,
    pub summaries: Vec<String>,
    pub failures: Vec<String>,
}

impl Report {
    fn new(config: Value, columns: Vec<&'static str>) -> Self {
        Self { config, columns, rows: Vec::new(), records: Vec::new(), summaries: Vec::new(), failures: Vec::new() }
    }

    /// Add a record, taking its CSV row from the named fields.
    fn push(&mut self, record: Value) {
        let row = self.columns.iter().map(|c| record.get(*c).cloned().unwrap_or(Value::Null)).collect();
        self.rows.push(row);
        self.records.push(record);
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => {
                let mut out = Vec::new();
                writeln!(out, "# config: {}", self.config)?;
                let mut w = csv::Writer::from_writer(&mut out);
                w.write_record(&self.columns).map_err(csv_err)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(cell)).map_err(csv_err)?;
                }
                w.flush()?;
                drop(w);
                Ok(out)
            }
            Format::Json => {
                let doc = json!({
                    "schema_version": SCHEMA_VERSION,
                    "config": self.config,
                    "records": self.records,
                });
                let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Lib(Error::Io(e.into())))?;
                out.push(b'\n');
                Ok(out)
            }
        }
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Lib(Error::Io(std::io::Error::other(e)))
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn config(command: &str, params: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "params": params,
    })
}

fn load_tables(n_max: u64) -> Result<ArithTables, CliError> {
    let n_max = n_max.max(2);
    Ok(match std::env::var_os(CACHE_ENV) {
        Some(dir) if !dir.is_empty() => ArithTables::load_or_build(std::path::Path::new(&dir), n_max)?,
        _ => ArithTables::build(n_max)?,
    })
}

fn truncation_json(r: Truncation) -> Value {
    json!({ "r": r.real(), "r_level": r.level() })
}

fn run_sieve(n: u64, from: u64, to: Option<u64>) -> Result<Report, CliError> {
    let to = to.unwrap_or(n.min(1000));
    if from < 1 || from > to || to > n {
        return Err(CliError::Config(format!("need 1 ≤ from ≤ to ≤ n, got {from}, {to}, {n}")));
    }
    let t = load_tables(n)?;
    let mut rep = Report::new(
        config("sieve", json!({ "n": n, "from": from, "to": to })),
        vec!["n", "spf", "mu", "phi", "num_div", "lambda", "psi"],
    );
    for m in from..=to {
        rep.push(json!({
            "n": m,
            "spf": t.spf(m),
            "mu": t.mu(m),
            "phi": t.phi(m),
            "num_div": t.num_div(m),
            "lambda": t.lambda(m),
            "psi": t.psi(m as i64),
        }));
    }
    rep.summaries.push(format!("sieve n={n}: ψ(n) = {}", t.psi(n as i64)));
    Ok(rep)
}

fn run_lambda(r: &TruncationArgs, from: u64, to: u64, exact: bool) -> Result<Report, CliError> {
    if from < 1 || from > to {
        return Err(CliError::Config(format!("need 1 ≤ from ≤ to, got {from}, {to}")));
    }
    let r = r.resolve(to)?;
    let t = load_tables(to)?;
    let w = if exact { ApproximantWeights::new_exact(r.level())? } else { ApproximantWeights::new(r.level())? };
    let vals = w.range_f64(from as i64, to as i64);
    let exact_vals = if exact { Some(w.range_exact(from as i64, to as i64)?) } else { None };
    let mut rep = Report::new(
        config("lambda", json!({ "from": from, "to": to, "exact": exact, "truncation": truncation_json(r) })),
        vec!["n", "lambda_r", "lambda_r_exact", "biglambda_r", "von_mangoldt"],
    );
    for (i, m) in (from..=to).enumerate() {
        rep.push(json!({
            "n": m,
            "lambda_r": vals[i],
            "lambda_r_exact": exact_vals.as_ref().map(|v| v[i].to_string()),
            "biglambda_r": biglambda_r(m as i64, r),
            "von_mangoldt": t.lambda(m),
        }));
    }
    rep.summaries.push(format!("lambda R={} n∈[{from},{to}]", r.real()));
    Ok(rep)
}

fn parse_shifts(s: &str) -> Result<Vec<i64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<i64>().map_err(|e| CliError::Config(format!("bad shift {t:?}: {e}"))))
        .collect()
}

fn run_singular(
    shifts: Option<&str>,
    weighted_sum: Option<u64>,
    r_stat: Option<u32>,
    h: Option<u64>,
    p_cut: u64,
) -> Result<Report, CliError> {
    if shifts.is_none() && weighted_sum.is_none() && r_stat.is_none() {
        return Err(CliError::Config("give --shifts, --weighted-sum or --r-stat".into()));
    }
    let mut rep = Report::new(
        config(
            "singular",
            json!({ "shifts": shifts, "weighted_sum": weighted_sum, "r_stat": r_stat, "h": h, "p_cut": p_cut }),
        ),
        vec!["quantity", "argument", "value", "main", "residual", "finite_part", "p_cut", "tail_bound"],
    );
    if let Some(s) = shifts {
        let js = parse_shifts(s)?;
        let v = singular::singular_vector_with(&js, p_cut)?;
        rep.summaries.push(format!("𝔖({s}) = {}", v.value));
        rep.push(json!({
            "quantity": "singular_series",
            "argument": s,
            "value": v.value,
            "finite_part": v.finite_part.to_string(),
            "p_cut": v.p_cut,
            "tail_bound": v.tail_bound,
        }));
    }
    if let Some(hh) = weighted_sum {
        let v = singular::weighted_s2_sum(hh)?;
        let main = singular::weighted_s2_main(hh);
        rep.summaries.push(format!("weighted pair sum h={hh}: {v} vs {main}"));
        rep.push(json!({
            "quantity": "weighted_pair_sum",
            "argument": hh.to_string(),
            "value": v,
            "main": main,
            "residual": v - main,
            "p_cut": DEFAULT_SINGULAR_P_CUT,
        }));
    }
    if let Some(r) = r_stat {
        let hh = h.ok_or_else(|| CliError::Config("--r-stat needs --h".into()))?;
        let v = singular::big_r(r, hh)?;
        let main = match r {
            1 => Some(0.0),
            2 => Some(singular::big_r2_main(hh)),
            _ => None,
        };
        rep.summaries.push(format!("R_{r}({hh}) = {v}"));
        rep.push(json!({
            "quantity": format!("tuple_average_{r}"),
            "argument": hh.to_string(),
            "value": v,
            "main": main,
            "residual": main.map(|m| v - m),
            "p_cut": DEFAULT_SINGULAR_P_CUT,
        }));
    }
    Ok(rep)
}

#[allow(clippy::too_many_arguments)]
fn run_correlate(
    ns: &[u64],
    r: &TruncationArgs,
    pattern: &str,
    mixed: bool,
    primed: bool,
    exact: bool,
    theta: f64,
) -> Result<Report, CliError> {
    let pattern = ShiftPattern::parse(pattern).map_err(|e| CliError::Config(e.to_string()))?;
    if mixed && exact {
        return Err(CliError::Config("--exact is not available with --mixed".into()));
    }
    let mode = if primed { RangeMode::Primed } else { RangeMode::Standard };
    let jmax = pattern.shifts().iter().copied().max().unwrap_or(0).max(0) as u64;
    let top = ns.iter().map(|&n| mode.bounds(n).1 as u64).max().unwrap_or(1) + jmax;
    let t = load_tables(top)?;
    let constants = crate::correlations::PredictionConstants::with_theta(theta);
    let truncs: Vec<Value> = ns.iter().map(|&n| r.resolve(n).map(truncation_json)).collect::<Result<_, _>>()?;
    let mut rep = Report::new(
        config(
            "correlate",
            json!({
                "n": ns,
                "truncation": truncs,
                "pattern": pattern.to_string(),
                "mixed": mixed,
                "range": mode,
                "exact": exact,
                "theta": theta,
                "admissible_r_exponent": constants.mixed_range_exponent(pattern.k()),
                "p_cut": DEFAULT_SINGULAR_P_CUT,
            }),
        ),
        vec![
            "pattern",
            "n",
            "r",
            "r_level",
            "mode",
            "mixed",
            "computed",
            "exact",
            "predicted_main",
            "residual",
            "normalized_residual",
        ],
    );
    for &n in ns {
        let rt = r.resolve(n)?;
        let res = if mixed {
            s_tilde_k(&t, n, &pattern, rt, mode)?
        } else if exact {
            s_k_rational(&t, n, &pattern, rt.level(), mode)?
        } else {
            s_k(&t, n, &pattern, rt, mode)?
        };
        rep.summaries.push(format!(
            "correlate N={n} R={} pattern={pattern}: computed={} predicted={:?} normalized_residual={:?}",
            rt.real(),
            res.computed,
            res.predicted_main,
            res.normalized_residual
        ));
        let mut v = to_value(&res);
        v["pattern"] = Value::String(pattern.to_string());
        rep.push(v);
    }
    Ok(rep)
}

const MOMENT_COLUMNS: [&str; 16] = [
    "kind",
    "k",
    "n",
    "h",
    "r",
    "r_level",
    "theta",
    "lambda_param",
    "computed",
    "computed_exact",
    "via_correlations",
    "via_correlations_exact",
    "expansion_residual",
    "predicted",
    "normalized_residual",
    "outside_proven_regime",
];

fn resolve_h(n: u64, h: Option<u64>, lambda: Option<f64>) -> Result<u64, CliError> {
    match (h, lambda) {
        (Some(h), _) => Ok(h),
        (None, Some(l)) => Ok(((l * (n as f64).ln()).round() as u64).max(1)),
        (None, None) => Err(CliError::Config("one of --h or --lambda is required".into())),
    }
}

struct OmegaSpec {
    rho: f64,
    c: Option<f64>,
}

fn parse_omega(s: &str) -> Result<OmegaSpec, CliError> {
    let mut rho = None;
    let mut c = None;
    let mut coupled = false;
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got {item:?}")))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| CliError::Config(format!("bad value {v:?}: {e}")));
        match k.trim() {
            "rho" => rho = Some(num(v)?),
            "C" | "c" if v.trim() == "coupled" => coupled = true,
            "C" | "c" => c = Some(num(v)?),
            other => return Err(CliError::Config(format!("unknown omega key {other:?}"))),
        }
    }
    let rho = rho.ok_or_else(|| CliError::Config("omega needs rho".into()))?;
    if c.is_none() && !coupled {
        return Err(CliError::Config("omega needs C (a number or 'coupled')".into()));
    }
    Ok(OmegaSpec { rho, c })
}

#[allow(clippy::too_many_arguments)]
fn run_moments(
    ns: &[u64],
    k: u32,
    h: Option<u64>,
    lambda: Option<f64>,
    r: &TruncationArgs,
    centered: bool,
    psi: bool,
    mixed: bool,
    expand: bool,
    exact: bool,
    first_moment: bool,
    omega: Option<&str>,
) -> Result<Report, CliError> {
    let modes = [centered, psi, mixed, first_moment, omega.is_some()].iter().filter(|&&b| b).count();
    if modes > 1 {
        return Err(CliError::Config(
            "choose at most one of --centered, --psi, --mixed, --first-moment, --omega".into(),
        ));
    }
    if let Some(spec) = omega {
        let spec = parse_omega(spec)?;
        let mut rep: Option<Report> = None;
        for &n in ns {
            let hh = resolve_h(n, h, lambda)?;
            let one = run_omega(n, hh, r, spec.rho, spec.c)?;
            match rep.as_mut() {
                None => rep = Some(one),
                Some(acc) => {
                    acc.rows.extend(one.rows);
                    acc.records.extend(one.records);
                    acc.summaries.extend(one.summaries);
                    acc.failures.extend(one.failures);
                }
            }
        }
        return rep.ok_or_else(|| CliError::Config("no N given".into()));
    }

    let hs: Vec<u64> = ns.iter().map(|&n| resolve_h(n, h, lambda)).collect::<Result<_, _>>()?;
    let truncs: Vec<Option<Value>> = ns
        .iter()
        .map(|&n| if r.is_set() { r.resolve(n).map(|t| Some(truncation_json(t))) } else { Ok(None) })
        .collect::<Result<_, _>>()?;
    let kind = if first_moment {
        "first_moment"
    } else if centered {
        "centered"
    } else if psi {
        "prime"
    } else if mixed {
        "mixed"
    } else {
        "truncated"
    };
    let params = json!({
        "n": ns,
        "h": hs,
        "lambda": lambda,
        "k": k,
        "kind": kind,
        "truncation": truncs,
        "expand": expand,
        "exact": exact,
    });
    if first_moment {
        let mut rep = Report::new(
            config("moments", params),
            vec![
                "n",
                "h",
                "direct_value",
                "split_exact",
                "integral_exact",
                "error_form",
                "error_form_offset",
            ],
        );
        let top = ns.iter().zip(&hs).map(|(n, h)| n + h).max().unwrap_or(2);
        let t = load_tables(top)?;
        for (&n, &hh) in ns.iter().zip(&hs) {
            let id = moments::first_moment_identity(&t, n, hh)?;
            if !id.split_exact() || !id.integral_exact() {
                rep.failures.push(format!("first moment rearrangement at N={n}, h={hh}"));
            }
            rep.summaries.push(format!(
                "first moment N={n} h={hh}: {} (error form offset {})",
                id.direct_value, id.error_form_offset
            ));
            let mut v = to_value(&id);
            v["split_exact"] = Value::Bool(id.split_exact());
            v["integral_exact"] = Value::Bool(id.integral_exact());
            rep.push(v);
        }
        return Ok(rep);
    }

    let needs_tables = centered || psi || mixed;
    let needs_r = !(centered || psi);
    if needs_r && !r.is_set() {
        return Err(CliError::Config("this moment needs --r-level or --r-exp".into()));
    }
    let tables = if needs_tables {
        let top = ns.iter().zip(&hs).map(|(n, h)| n + h).max().unwrap_or(2);
        Some(load_tables(top)?)
    } else {
        None
    };
    let mut rep = Report::new(config("moments", params), MOMENT_COLUMNS.to_vec());
    for (&n, &hh) in ns.iter().zip(&hs) {
        let m = if centered {
            moments::mu_k(tables.as_ref().unwrap(), n, hh, k)?
        } else if psi {
            moments::moment_psi(tables.as_ref().unwrap(), n, hh, k)?
        } else if mixed {
            moments::mixed_moment(tables.as_ref().unwrap(), n, hh, r.resolve(n)?, k)?
        } else if exact {
            let m = moments::moment_psi_r_exact(n, hh, r.resolve(n)?.level(), k)?;
            if m.exact_agreement() != Some(true) {
                rep.failures.push(format!("grouping identity at N={n}, h={hh}, k={k}"));
            }
            m
        } else if expand {
            let m = moments::expand_via_correlations(n, hh, r.resolve(n)?, k)?;
            if m.relative_expansion_residual().unwrap_or(0.0) > IDENTITY_TOLERANCE {
                rep.failures.push(format!("grouping identity at N={n}, h={hh}, k={k}"));
            }
            m
        } else {
            moments::moment_psi_r(n, hh, r.resolve(n)?, k)?
        };
        rep.summaries.push(format!(
            "moments {kind} N={n} h={hh} k={k}: computed={} predicted={:?} normalized_residual={:?}",
            m.computed, m.predicted, m.normalized_residual
        ));
        rep.push(to_value(&m));
    }
    Ok(rep)
}

fn run_lemma(which: u8, ladder: &[u64], k: u64, j: i64, log_weighted: bool, pair: Option<&str>) -> Result<Report, CliError> {
    let pair = match pair {
        None => MonicPolyPair::hildebrand(),
        Some(s) => {
            let (a, b) = s
                .split_once(';')
                .ok_or_else(|| CliError::Config("pair must look like \"c0,c1;d0,d1,d2\"".into()))?;
            let (p1, p2) = (parse_shifts(a)?, parse_shifts(b)?);
            MonicPolyPair::new(p1, p2, DEFAULT_LEMMA_P_CUT).map_err(|e| CliError::Config(e.to_string()))?
        }
    };
    let report = match which {
        1 => lemmas::lemma1(&pair, k, ladder)?,
        2 => lemmas::lemma2(ladder)?,
        3 => lemmas::lemma3(ladder)?,
        4 => lemmas::lemma4(j, k, ladder, log_weighted)?,
        5 => lemmas::lemma5(j, k, ladder)?,
        _ => unreachable!("clap restricts --which"),
    };
    let mut rep = Report::new(
        config(
            "lemma",
            json!({
                "which": which,
                "ladder": ladder,
                "k": k,
                "j": j,
                "log_weighted": log_weighted,
                "pair": { "p1": pair.p1.0, "p2": pair.p2.0 },
                "p_cut": DEFAULT_LEMMA_P_CUT,
            }),
        ),
        vec!["lemma", "x", "lhs", "main", "scaled_error"],
    );
    for i in 0..report.x_ladder.len() {
        rep.rows.push(vec![
            json!(report.lemma),
            json!(report.x_ladder[i]),
            json!(report.lhs[i]),
            json!(report.main[i]),
            json!(report.scaled_error[i]),
        ]);
    }
    rep.summaries.push(format!(
        "lemma {which}: scaled errors {:?}, observations {:?}",
        report.scaled_error, report.observations
    ));
    rep.records.push(to_value(&report));
    Ok(rep)
}

fn run_omega(n: u64, h: u64, r: &TruncationArgs, rho: f64, c: Option<f64>) -> Result<Report, CliError> {
    let rt = r.resolve(n)?;
    let coupled = c.is_none();
    let c = match c {
        Some(c) => c,
        None => coupled_c(n, h, rt, rho)?,
    };
    let t = load_tables(2 * n + h)?;
    let res = moments::omega_experiment(&t, n, h, rho, c, rt)?;
    let mut rep = Report::new(
        config(
            "omega",
            json!({ "n": n, "h": h, "truncation": truncation_json(rt), "rho": rho, "c": c, "coupled": coupled }),
        ),
        vec![
            "n",
            "h",
            "r",
            "r_level",
            "rho",
            "c",
            "a",
            "m1",
            "m2",
            "m3",
            "m1_expanded",
            "m2_expanded",
            "m3_expanded",
            "exact_agreement",
            "predicted_m1",
            "predicted_m2",
            "predicted_m3",
            "coupled_m3_prediction",
            "outside_proven_regime",
        ],
    );
    let rel = res.relative_residuals();
    if !res.exact_agreement || rel.iter().any(|&d| d > IDENTITY_TOLERANCE) {
        rep.failures.push(format!("shifted moment expansions at N={n}, h={h}: {rel:?}"));
    }
    rep.summaries.push(format!(
        "omega N={n} h={h} R={} rho={rho} C={c}: m3={} predicted={} sign={}{}",
        rt.real(),
        res.m3,
        res.predicted_m3,
        if res.m3 >= 0.0 { "+" } else { "-" },
        if res.outside_proven_regime { " (outside proven regime)" } else { "" }
    ));
    let mut v = to_value(&res);
    v["coupled_m3_prediction"] = if coupled { json!(coupled_m3_prediction(n, h, rt, rho)) } else { Value::Null };
    rep.push(v);
    Ok(rep)
}

fn dispatch(cmd: &Command) -> Result<Report, CliError> {
    match cmd {
        Command::Sieve { n, from, to } => run_sieve(*n, *from, *to),
        Command::Lambda { r, from, to, exact } => run_lambda(r, *from, *to, *exact),
        Command::Singular { shifts, weighted_sum, r_stat, h, p_cut } => {
            run_singular(shifts.as_deref(), *weighted_sum, *r_stat, *h, *p_cut)
        }
        Command::Correlate { n, r, pattern, mixed, primed_range, exact, theta } => {
            run_correlate(n, r, pattern, *mixed, *primed_range, *exact, *theta)
        }
        Command::Moments { n, k, h, lambda, r, centered, psi, mixed, expand, exact, first_moment, omega } => run_moments(
            n,
            *k,
            *h,
            *lambda,
            r,
            *centered,
            *psi,
            *mixed,
            *expand,
            *exact,
            *first_moment,
            omega.as_deref(),
        ),
        Command::Lemma { which, ladder, k, j, log_weighted, pair } => {
            run_lemma(*which, ladder, *k, *j, *log_weighted, pair.as_deref())
        }
        Command::Omega { n, h, r, rho, c, coupled } => {
            if c.is_none() && !coupled {
                return Err(CliError::Config("give --c or --coupled".into()));
            }
            run_omega(*n, *h, r, *rho, *c)
        }
    }
}

fn default_format(cmd: &Command) -> Format {
    match cmd {
        Command::Lemma { .. } => Format::Json,
        _ => Format::Csv,
    }
}

/// Parse arguments, run the experiment, write the artifact and return the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    match execute(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be ≥ 1".into()));
        }
        // a pool that already exists keeps its size; results do not depend on it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let report = dispatch(&cli.command)?;
    let format = cli.format.unwrap_or_else(|| default_format(&cli.command));
    let bytes = report.render(format)?;
    match &cli.output {
        Some(path) => std::fs::write(path, &bytes)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes)?;
            out.flush()?;
        }
    }
    for s in &report.summaries {
        eprintln!("{s}");
    }
    if !report.failures.is_empty() {
        return Err(CliError::Identity(report.failures.join("; ")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_exponent_form() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("250"), Ok(250));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn omega_spec_parsing() {
        let s = parse_omega("rho=0.3,C=-0.5").unwrap();
        assert_eq!((s.rho, s.c), (0.3, Some(-0.5)));
        assert!(parse_omega("rho=0.3,C=coupled").unwrap().c.is_none());
        assert!(parse_omega("C=1").is_err());
        assert!(parse_omega("rho=1,x=2").is_err());
    }

    #[test]
    fn csv_has_config_header() {
        let rep = run_sieve(30, 1, Some(5)).unwrap();
        let text = String::from_utf8(rep.render(Format::Csv).unwrap()).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# config: {"));
        assert_eq!(lines.next().unwrap(), "n,spf,mu,phi,num_div,lambda,psi");
        assert_eq!(lines.count(), 5);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["divcorr", "sieve"]), exit::CONFIG);
        assert_eq!(run(["divcorr", "correlate", "--n", "100", "--r-level", "10", "--pattern", "0:x"]), exit::CONFIG);
        assert_eq!(
            run(["divcorr", "omega", "--n", "1000", "--h", "3", "--r-level", "10", "--rho", "0.3", "--c", "1"]),
            exit::PRECONDITION
        );
    }
}
