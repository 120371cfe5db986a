//! Expected-rate formulas.
//!
//! - online matching: closed form from the differential-equation analysis
//! - greedy clique cover: a `K`-dimensional ODE integrated with RK4
//! - uncoded and optimal subfile-caching baselines, through the exact
//!   distribution of the number of distinct demands
//! - additive and multiplicative coding gains

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("caching probability q = {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("clique-cover ODE needs q < 1, got {0}")]
    ProbabilityOne(f64),
    #[error("number of caches must be at least 1")]
    NoCaches,
    #[error("ODE step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("ODE state became non-finite at x = {x} (step {step} too large?)")]
    NonFinite { x: f64, step: f64 },
    #[error("number of distinct demands must be at least 1")]
    ZeroParts,
    #[error("invalid library: N = {n}, M = {m}")]
    InvalidLibrary { n: u64, m: u64 },
    #[error("optimal subfile-caching rate is undefined for M = 0")]
    ZeroCapacity,
    #[error("coding gain undefined: coded rate {coded}, uncoded rate {uncoded}")]
    DegenerateGain { coded: f64, uncoded: f64 },
}

pub type Result<T> = std::result::Result<T, AnalyticsError>;

fn check_q(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(AnalyticsError::InvalidProbability(q))
    }
}

/// Which delivery scheme a rate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RateScheme {
    /// File caching, online matching delivery.
    Cfcm,
    /// File caching, greedy clique cover delivery.
    Cfcc,
    /// Subfile caching with `delta` subfiles per file, clique cover delivery.
    Cscc { delta: usize },
    Uncoded,
    /// Optimal decentralized subfile caching baseline.
    CscOpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RateSource {
    Analytic,
    MonteCarlo,
}

/// One expected-rate value for a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub scheme: RateScheme,
    pub source: RateSource,
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub delta: usize,
    pub rate: f64,
    /// Monte-Carlo only; zero for analytic points.
    pub stderr: f64,
    /// Monte-Carlo only; zero for analytic points.
    pub trials: usize,
}

impl RatePoint {
    /// Analytic companion for `(scheme, K, N, M, Δ)`.
    pub fn analytic(scheme: RateScheme, k: usize, n: usize, m: usize) -> Result<Self> {
        if n == 0 || m > n {
            return Err(AnalyticsError::InvalidLibrary {
                n: n as u64,
                m: m as u64,
            });
        }
        let q = m as f64 / n as f64;
        let (rate, delta) = match scheme {
            RateScheme::Cfcm => (rate_cfcm_analytic(k, q)?, 1),
            RateScheme::Cfcc => (rate_cfcc_analytic(k, q)?, 1),
            RateScheme::Cscc { delta } => (rate_cscc_approx(k, q, delta)?, delta),
            RateScheme::Uncoded => (rate_uncoded_analytic(k as u64, n as u64, m as u64)?, 1),
            RateScheme::CscOpt => (rate_csc_opt_analytic(k as u64, n as u64, m as u64)?, 1),
        };
        Ok(Self {
            scheme,
            source: RateSource::Analytic,
            k,
            n,
            m,
            delta,
            rate,
            stderr: 0.0,
            trials: 0,
        })
    }
}

// ---------------------------------------------------------------------------
// Online matching
// ---------------------------------------------------------------------------

/// Expected online-matching rate on the independent-edge model:
/// `½[K(1−q) − log(2 − (1−q²)^{K(1−q)}) / log(1−q²)]`.
///
/// Evaluated through `ln_1p`/`expm1` so the `q → 0` limit (`K`) is reached
/// without cancellation; `q > 1 − 10⁻¹²` returns 0.
pub fn rate_cfcm_analytic(k: usize, q: f64) -> Result<f64> {
    check_q(q)?;
    if k == 0 {
        return Err(AnalyticsError::NoCaches);
    }
    let k = k as f64;
    if q == 0.0 {
        return Ok(k);
    }
    if q > 1.0 - 1e-12 {
        return Ok(0.0);
    }
    let unlooped = k * (1.0 - q);
    // u = −log(1 − q²) > 0
    let u = -(-q * q).ln_1p();
    if u == 0.0 {
        return Ok(unlooped);
    }
    let log_numerator = (-(-unlooped * u).exp_m1()).ln_1p();
    Ok(0.5 * (unlooped + log_numerator / u))
}

// ---------------------------------------------------------------------------
// Greedy clique cover ODE
// ---------------------------------------------------------------------------

/// Sign of the `g_{i−1}` term in the clique-size drift
/// `dz_i/dx = (1−q)[2g_i − g_{i+1} ± g_{i−1}]`.
///
/// `Minus` is the birth–death balance of the process: a size-`i` clique is
/// created when the largest suitable clique has size `i−1` (probability
/// `g_i − g_{i−1}`) and destroyed when it has size `i` (probability
/// `g_{i+1} − g_i`). `Plus` is the typeset form. Monte-Carlo on the
/// independent-edge model agrees with `Minus` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum DriftSign {
    #[default]
    Minus,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    /// Fixed RK4 step; `None` means `1/(50K)`.
    pub step: Option<f64>,
    /// Threshold below which `z_i(1)` counts as zero for
    /// `i_max_effective`; tiny negative round-off above `−tol` is clamped.
    pub tol: f64,
    pub sign: DriftSign,
    /// Number of evenly spaced trajectory samples to keep (0 = none).
    pub trajectory_samples: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            step: None,
            tol: 1e-12,
            sign: DriftSign::Minus,
            trajectory_samples: 0,
        }
    }
}

pub fn default_ode_step(k: usize) -> f64 {
    1.0 / (50.0 * k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub x: f64,
    pub z: Vec<f64>,
}

/// Normalized clique counts `z_i(1; q)`, `i = 1..K` (stored at index `i−1`).
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub q: f64,
    pub k: usize,
    pub z: Vec<f64>,
    pub trajectory: Option<Vec<TrajectoryPoint>>,
    pub step_size: f64,
    pub i_max_effective: usize,
    pub sign: DriftSign,
}

impl OdeSolution {
    /// Expected number of cliques, `K Σ_i z_i(1)`.
    pub fn clique_count(&self) -> f64 {
        self.k as f64 * self.z.iter().sum::<f64>()
    }

    /// `Σ_i i·z_i(1)`: covered vertices per cache.
    pub fn covered_mass(&self) -> f64 {
        mass(&self.z)
    }
}

pub(crate) fn mass(z: &[f64]) -> f64 {
    z.iter().enumerate().map(|(i, &zi)| (i + 1) as f64 * zi).sum()
}

struct CliqueDrift {
    k: f64,
    unlooped: f64,
    /// `log(1 − q^{2j})` for `j = 1..K`.
    log_miss: Vec<f64>,
    sign: f64,
    g: Vec<f64>,
}

impl CliqueDrift {
    fn new(k: usize, q: f64, sign: DriftSign) -> Self {
        let q2 = q * q;
        let mut power = 1.0;
        let log_miss = (0..k)
            .map(|_| {
                power *= q2;
                (-power).ln_1p()
            })
            .collect();
        Self {
            k: k as f64,
            unlooped: 1.0 - q,
            log_miss,
            sign: match sign {
                DriftSign::Minus => -1.0,
                DriftSign::Plus => 1.0,
            },
            g: vec![0.0; k + 2],
        }
    }

    /// `g_i = Π_{j≥i} (1 − q^{2j})^{K z_j}` via a suffix sum in log space,
    /// with `g_0 = 0` and `g_{K+1} = 1`.
    fn eval(&mut self, z: &[f64], dz: &mut [f64]) {
        let k = z.len();
        self.g[k + 1] = 1.0;
        let mut log_g = 0.0;
        for i in (1..=k).rev() {
            log_g += self.k * z[i - 1] * self.log_miss[i - 1];
            self.g[i] = log_g.exp();
        }
        self.g[0] = 0.0;
        for i in 1..=k {
            dz[i - 1] =
                self.unlooped * (2.0 * self.g[i] - self.g[i + 1] + self.sign * self.g[i - 1]);
        }
    }
}

/// Classical fixed-step RK4 on `[0, 1]`; `observe` sees every step's state.
fn rk4<F, O>(y: &mut [f64], steps: usize, mut rhs: F, mut observe: O) -> std::result::Result<(), f64>
where
    F: FnMut(&[f64], &mut [f64]),
    O: FnMut(usize, f64, &[f64]),
{
    let n = y.len();
    let h = 1.0 / steps as f64;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for step in 0..steps {
        rhs(y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let x = (step + 1) as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(x);
        }
        observe(step + 1, x, y);
    }
    Ok(())
}

/// Integrates the clique-size system from `z(0) = 0` to `x = 1` with the
/// birth–death drift and step `step`.
pub fn solve_clique_cover_ode(k: usize, q: f64, step: f64, tol: f64) -> Result<OdeSolution> {
    solve_clique_cover_ode_with(
        k,
        q,
        &OdeOptions {
            step: Some(step),
            tol,
            ..OdeOptions::default()
        },
    )
}

pub fn solve_clique_cover_ode_with(k: usize, q: f64, opts: &OdeOptions) -> Result<OdeSolution> {
    check_q(q)?;
    if q >= 1.0 {
        return Err(AnalyticsError::ProbabilityOne(q));
    }
    if k == 0 {
        return Err(AnalyticsError::NoCaches);
    }
    let step = opts.step.unwrap_or_else(|| default_ode_step(k));
    if !(step.is_finite() && step > 0.0) {
        return Err(AnalyticsError::InvalidStep(step));
    }
    let steps = (1.0 / step).ceil().max(1.0) as usize;
    let h = 1.0 / steps as f64;

    let mut drift = CliqueDrift::new(k, q, opts.sign);
    let mut z = vec![0.0; k];
    let samples = opts.trajectory_samples;
    let mut trajectory = (samples > 0).then(|| {
        vec![TrajectoryPoint {
            x: 0.0,
            z: z.clone(),
        }]
    });
    let every = steps.checked_div(samples).map_or(usize::MAX, |e| e.max(1));
    rk4(
        &mut z,
        steps,
        |y, dy| drift.eval(y, dy),
        |i, x, y| {
            if let Some(t) = trajectory.as_mut() {
                if (i % every == 0 || i == steps)
                    && t.last().is_none_or(|p| p.x < x) {
                        t.push(TrajectoryPoint { x, z: y.to_vec() });
                    }
            }
        },
    )
    .map_err(|x| AnalyticsError::NonFinite { x, step: h })?;

    for v in z.iter_mut() {
        if *v < 0.0 && *v > -opts.tol.max(1e-12) {
            *v = 0.0;
        }
    }
    let i_max_effective = z.iter().rposition(|&v| v > opts.tol).map_or(0, |i| i + 1);
    Ok(OdeSolution {
        q,
        k,
        z,
        trajectory,
        step_size: h,
        i_max_effective,
        sign: opts.sign,
    })
}

/// Expected greedy-clique-cover rate `K Σ_i z_i(1; q)`; `q = 1` gives 0.
pub fn rate_cfcc_analytic(k: usize, q: f64) -> Result<f64> {
    rate_cfcc_with(k, q, &OdeOptions::default())
}

pub fn rate_cfcc_with(k: usize, q: f64, opts: &OdeOptions) -> Result<f64> {
    check_q(q)?;
    if k == 0 {
        return Err(AnalyticsError::NoCaches);
    }
    if q >= 1.0 {
        return Ok(0.0);
    }
    Ok(solve_clique_cover_ode_with(k, q, opts)?.clique_count())
}

/// `|R(h) − R(h/2)|` for the clique-cover rate, the step-halving check.
pub fn ode_step_halving_gap(k: usize, q: f64, step: f64) -> Result<f64> {
    let coarse = solve_clique_cover_ode(k, q, step, 1e-12)?.clique_count();
    let fine = solve_clique_cover_ode(k, q, step / 2.0, 1e-12)?.clique_count();
    Ok((coarse - fine).abs())
}

/// Subfile clique-cover approximation `R_cc(KΔ) / Δ`. Only indicative when
/// `Δ ≪ K` and `NΔ ≫ KΔ`.
pub fn rate_cscc_approx(k: usize, q: f64, delta: usize) -> Result<f64> {
    if delta == 0 {
        return Err(AnalyticsError::InvalidLibrary { n: 0, m: 0 });
    }
    Ok(rate_cfcc_analytic(k * delta, q)? / delta as f64)
}

// ---------------------------------------------------------------------------
// Exact combinatorics
// ---------------------------------------------------------------------------

pub fn binomial(n: u64, r: u64) -> BigUint {
    if r > n {
        return BigUint::zero();
    }
    let r = r.min(n - r);
    (0..r).fold(BigUint::one(), |acc, i| acc * (n - i) / (i + 1))
}

/// Number of surjections from a `k`-set onto an `m`-set,
/// `Σ_j (−1)^j C(m, j) (m − j)^k` (equal to `S(k, m)·m!`).
pub fn surjection_count(k: u64, m: u64) -> Result<BigUint> {
    if m == 0 {
        return Err(AnalyticsError::ZeroParts);
    }
    if m > k {
        return Ok(BigUint::zero());
    }
    let exp = u32::try_from(k).expect("exponent fits u32");
    let mut total = BigInt::zero();
    for j in 0..=m {
        let term = BigInt::from(binomial(m, j)) * BigInt::from(m - j).pow(exp);
        if j % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    Ok(total.to_biguint().expect("surjection count is non-negative"))
}

fn pow_big(base: u64, exp: u64) -> BigUint {
    BigUint::from(base).pow(u32::try_from(exp).expect("exponent fits u32"))
}

fn ratio(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// `P(N_e(d) = m) = C(N, m)·surj(K, m) / N^K`, exactly; zero outside
/// `1 ≤ m ≤ min(K, N)`.
pub fn prob_distinct(k: u64, n: u64, m: u64) -> BigRational {
    if m == 0 || m > k || m > n || n == 0 {
        return BigRational::zero();
    }
    let count = binomial(n, m) * surjection_count(k, m).expect("m ≥ 1");
    ratio(count, pow_big(n, k))
}

/// Distribution of `N_e(d)` in floating point, built one cache at a time:
/// a new demand repeats one of `j` seen files with probability `j/N`.
/// Index `m` holds `P(N_e = m)`.
pub fn distinct_distribution_f64(k: u64, n: u64) -> Vec<f64> {
    let top = k.min(n) as usize;
    let nf = n as f64;
    let mut p = vec![0.0; top + 1];
    p[0] = 1.0;
    for _ in 0..k {
        for j in (0..=top).rev() {
            let stay = p[j] * j as f64 / nf;
            let arrive = if j > 0 { p[j - 1] * (nf - (j - 1) as f64) / nf } else { 0.0 };
            p[j] = stay + arrive;
        }
    }
    p
}

/// `E[N_e(d)]` as the sum `Σ_m m·P(N_e = m)`.
pub fn expected_distinct_sum_form(k: u64, n: u64) -> BigRational {
    (1..=k.min(n))
        .map(|m| prob_distinct(k, n, m) * BigRational::from_integer(BigInt::from(m)))
        .fold(BigRational::zero(), |a, b| a + b)
}

/// `E[N_e(d)] = N(1 − (1 − 1/N)^K) = (N^{K+1} − N(N−1)^K) / N^K`.
pub fn expected_distinct_closed_form(k: u64, n: u64) -> BigRational {
    let num = pow_big(n, k + 1) - BigUint::from(n) * pow_big(n - 1, k);
    ratio(num, pow_big(n, k))
}

/// Left side of `Σ_m m C(N,m) surj(K,m) = N^{K+1} − N(N−1)^K`.
pub fn distinct_identity_lhs(k: u64, n: u64) -> BigUint {
    (1..=k.min(n))
        .map(|m| BigUint::from(m) * binomial(n, m) * surjection_count(k, m).expect("m ≥ 1"))
        .sum()
}

pub fn distinct_identity_rhs(k: u64, n: u64) -> BigUint {
    pow_big(n, k + 1) - BigUint::from(n) * pow_big(n - 1, k)
}

fn check_library(n: u64, m: u64) -> Result<()> {
    if n == 0 || m > n {
        Err(AnalyticsError::InvalidLibrary { n, m })
    } else {
        Ok(())
    }
}

/// Exact expected uncoded rate `E[N_e(d)]·(1 − M/N)`.
pub fn rate_uncoded_exact(k: u64, n: u64, m: u64) -> Result<BigRational> {
    check_library(n, m)?;
    let miss = BigRational::new(BigInt::from(n - m), BigInt::from(n));
    Ok(expected_distinct_closed_form(k, n) * miss)
}

/// Expected uncoded rate `N(1 − (1 − 1/N)^K)(1 − M/N)`.
pub fn rate_uncoded_analytic(k: u64, n: u64, m: u64) -> Result<f64> {
    check_library(n, m)?;
    let nf = n as f64;
    let distinct = nf * -(k as f64 * (-1.0 / nf).ln_1p()).exp_m1();
    Ok(distinct * (1.0 - m as f64 / nf))
}

/// Bit budget above which the optimal subfile-caching rate switches from
/// exact rationals to the floating-point recursion.
pub const EXACT_BIT_BUDGET: f64 = 1e5;

/// Exact `Σ_m P(N_e = m)·(N−M)/M·(1 − (1 − M/N)^m)`.
pub fn rate_csc_opt_exact(k: u64, n: u64, m: u64) -> Result<BigRational> {
    check_library(n, m)?;
    if m == 0 {
        return Err(AnalyticsError::ZeroCapacity);
    }
    let factor = BigRational::new(BigInt::from(n - m), BigInt::from(m));
    let keep = BigRational::new(BigInt::from(n - m), BigInt::from(n));
    let mut keep_pow = BigRational::one();
    let mut total = BigRational::zero();
    for parts in 1..=k.min(n) {
        keep_pow *= &keep;
        total += prob_distinct(k, n, parts) * (BigRational::one() - &keep_pow);
    }
    Ok(total * factor)
}

/// Floating-point version of [`rate_csc_opt_exact`] using
/// [`distinct_distribution_f64`].
pub fn rate_csc_opt_f64(k: u64, n: u64, m: u64) -> Result<f64> {
    check_library(n, m)?;
    if m == 0 {
        return Err(AnalyticsError::ZeroCapacity);
    }
    let q = m as f64 / n as f64;
    let log_keep = (-q).ln_1p();
    let dist = distinct_distribution_f64(k, n);
    let hit: f64 = dist
        .iter()
        .enumerate()
        .skip(1)
        .map(|(parts, &p)| p * -(parts as f64 * log_keep).exp_m1())
        .sum();
    Ok((n - m) as f64 / m as f64 * hit)
}

/// Expected rate of optimal decentralized subfile caching; exact rational
/// arithmetic when `K·log₂N` is within [`EXACT_BIT_BUDGET`].
pub fn rate_csc_opt_analytic(k: u64, n: u64, m: u64) -> Result<f64> {
    check_library(n, m)?;
    if m == 0 {
        return Err(AnalyticsError::ZeroCapacity);
    }
    if k as f64 * (n as f64).log2() <= EXACT_BIT_BUDGET {
        Ok(rate_csc_opt_exact(k, n, m)?.to_f64().unwrap_or(f64::NAN))
    } else {
        rate_csc_opt_f64(k, n, m)
    }
}

// ---------------------------------------------------------------------------
// Coding gains
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    /// `(R_uncoded − R_coded) / R_uncoded`
    pub additive: f64,
    /// `R_uncoded / R_coded`
    pub multiplicative: f64,
}

pub fn coding_gains(r_coded: f64, r_uncoded: f64) -> Result<Gains> {
    if !(r_coded > 0.0 && r_uncoded > 0.0) || !r_coded.is_finite() || !r_uncoded.is_finite() {
        return Err(AnalyticsError::DegenerateGain {
            coded: r_coded,
            uncoded: r_uncoded,
        });
    }
    let additive = (r_uncoded - r_coded) / r_uncoded;
    let multiplicative = r_uncoded / r_coded;
    debug_assert!((additive - (1.0 - 1.0 / multiplicative)).abs() <= 1e-12 * multiplicative.max(1.0));
    Ok(Gains {
        additive,
        multiplicative,
    })
}
