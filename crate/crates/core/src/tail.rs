//! Tail estimators for `I(X)`, `J(X)` and the line integral, Weibull exponent
//! fits and the closed-form lower curve.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fbm::{GaussianGridModel, GridPath, HurstParam, PathSampler};
use crate::functionals::{
    holder_norm, CellFunction, PathSource, PhiSpec, QuadValue, QuadratureConfig, SobolevQuadrature,
    DIRECT_MAX_LEVEL,
};
use crate::rng::SeedStream;
use crate::stats::compensated_sum;
use crate::roughint::rs_integral;
use crate::weierstrass::{h_alpha_path, WeierstrassParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailMethod {
    #[serde(rename = "plain-mc")]
    PlainMc,
    #[serde(rename = "cm-tilted")]
    CmTilted,
    /// `E[P(|Z| > λ/√I(X))]`, averaged over plain or tilted `X`.
    #[serde(rename = "assembled")]
    Assembled,
    #[serde(rename = "theory")]
    Theory,
}

impl fmt::Display for TailMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TailMethod::PlainMc => "plain-mc",
            TailMethod::CmTilted => "cm-tilted",
            TailMethod::Assembled => "assembled",
            TailMethod::Theory => "theory",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub lambda: f64,
    pub p_hat: f64,
    /// `ln p_hat`, kept separately so that tiny probabilities survive.
    pub log_p_hat: f64,
    pub stderr: f64,
    /// `stderr / p_hat`; infinite when `p_hat = 0`.
    pub rel_stderr: f64,
    pub method: TailMethod,
    pub n_samples: usize,
    pub seed: u64,
    /// Kish effective sample size of the weighted terms.
    pub ess: f64,
    /// Multiple of the unit-norm shift direction used for sampling (0 for plain MC).
    pub shift_scale: f64,
    pub max_log_weight: f64,
}

impl TailEstimate {
    /// One-sided 95% upper bound (rule of three) when nothing was observed.
    pub fn upper_ci(&self) -> f64 {
        if self.p_hat == 0.0 {
            3.0 / self.n_samples as f64
        } else {
            self.p_hat + 1.96 * self.stderr
        }
    }

    /// Plain MC saw no hits: switch to a tilted estimator.
    pub fn needs_tilt(&self) -> bool {
        self.p_hat == 0.0
    }

    pub fn ci95(&self) -> (f64, f64) {
        ((self.p_hat - 1.96 * self.stderr).max(0.0), self.p_hat + 1.96 * self.stderr)
    }

    pub fn weight_overflow(&self) -> bool {
        self.max_log_weight > 700.0
    }
}

/// Point estimate and spread of `(1/n) Σ exp(t_i)` from log-terms `t_i`
/// (which may be `−∞`).
struct LogMean {
    p: f64,
    log_p: f64,
    rel_se: f64,
    ess: f64,
}

fn log_mean(terms: &[f64]) -> LogMean {
    let n = terms.len() as f64;
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return LogMean {
            p: 0.0,
            log_p: f64::NEG_INFINITY,
            rel_se: f64::INFINITY,
            ess: 0.0,
        };
    }
    let scaled: Vec<f64> = terms.iter().map(|t| (t - m).exp()).collect();
    let s1 = compensated_sum(&scaled);
    let s2 = compensated_sum(&scaled.iter().map(|e| e * e).collect::<Vec<_>>());
    let log_p = m + s1.ln() - n.ln();
    let rel_var = ((n * s2 / (s1 * s1) - 1.0) / (n - 1.0)).max(0.0);
    LogMean {
        p: log_p.exp(),
        log_p,
        rel_se: rel_var.sqrt(),
        ess: s1 * s1 / s2,
    }
}

fn estimate_from_terms(
    lambda: f64,
    terms: &[f64],
    method: TailMethod,
    seed: u64,
    shift_scale: f64,
    max_log_weight: f64,
) -> TailEstimate {
    let lm = log_mean(terms);
    TailEstimate {
        lambda,
        p_hat: lm.p.min(1.0),
        log_p_hat: lm.log_p.min(0.0),
        stderr: if lm.p > 0.0 { lm.p * lm.rel_se } else { 0.0 },
        rel_stderr: lm.rel_se,
        method,
        n_samples: terms.len(),
        seed,
        ess: lm.ess,
        shift_scale,
        max_log_weight,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailFunctional {
    I,
    J,
    /// `|∫₀¹ φ(X) dY|` with an independent `Y` on the same grid.
    Integral,
}

/// Evaluates `I` or `J` of sampled paths at a fixed quadrature level.
#[derive(Debug, Clone)]
pub struct FunctionalEval {
    phi: PhiSpec,
    quad: SobolevQuadrature,
}

impl FunctionalEval {
    pub fn new(phi: PhiSpec, hurst: HurstParam, quad_level: u32) -> Result<Self> {
        Ok(Self {
            phi,
            quad: SobolevQuadrature::new(hurst.require_main_regime()?, quad_level)?,
        })
    }

    pub fn phi(&self) -> &PhiSpec {
        &self.phi
    }

    fn cells(&self, x: &GridPath) -> Result<CellFunction> {
        let grid = x.grid(self.quad.level())?;
        Ok(CellFunction::from_nodes(&grid.map(|v| self.phi.eval(v))))
    }

    pub fn i(&self, x: &GridPath) -> Result<f64> {
        self.quad.sobolev_sq(&self.cells(x)?)
    }

    pub fn j(&self, x: &GridPath) -> Result<f64> {
        let f = self.cells(x)?;
        if self.quad.level() <= DIRECT_MAX_LEVEL {
            self.quad.j_direct(&f)
        } else {
            self.quad.j_lagged(&f)
        }
    }
}

fn functional_value(
    func: TailFunctional,
    eval: &FunctionalEval,
    x: &GridPath,
    model: &GaussianGridModel,
    y_rng: &mut impl Rng,
) -> Result<f64> {
    match func {
        TailFunctional::I => eval.i(x),
        TailFunctional::J => eval.j(x),
        TailFunctional::Integral => {
            let y = model.sample(y_rng);
            Ok(rs_integral(x, &y, eval.phi(), x.level())?.abs())
        }
    }
}

/// Functional values and log-weights of `n` paths `X = shift + L z`.
/// With `shift = None` the weights are all 1. The same `z_i` are used for every
/// shift, so estimates at different shifts share random numbers.
pub fn sample_functional(
    model: &GaussianGridModel,
    eval: &FunctionalEval,
    func: TailFunctional,
    shift: Option<&GridPath>,
    n: usize,
    seeds: &SeedStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let whitened = match shift {
        Some(s) => Some(model.whitened_shift(s)?),
        None => None,
    };
    let half_q = whitened.as_ref().map_or(0.0, |w| 0.5 * w.iter().map(|v| v * v).sum::<f64>());
    let x_seeds = seeds.fork("x");
    let y_seeds = seeds.fork("y");
    let out: Vec<Result<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = x_seeds.rng(i as u64);
            let z: Vec<f64> = (0..model.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let base = model.sample_from_normals(&z)?;
            let (x, log_w) = match (shift, &whitened) {
                (Some(s), Some(w)) => {
                    let dot: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum();
                    (base.add_scaled(1.0, s)?, -dot - half_q)
                }
                _ => (base, 0.0),
            };
            let mut y_rng = y_seeds.rng(i as u64);
            Ok((functional_value(func, eval, &x, model, &mut y_rng)?, log_w))
        })
        .collect();
    let mut values = Vec::with_capacity(n);
    let mut log_w = Vec::with_capacity(n);
    for r in out {
        let (v, w) = r?;
        values.push(v);
        log_w.push(w);
    }
    Ok((values, log_w))
}

fn require_samples(n: usize) -> Result<()> {
    if n < 1000 {
        return Err(Error::param("n", format!("need at least 1000 samples, got {n}")));
    }
    Ok(())
}

fn indicator_terms(values: &[f64], log_w: &[f64], lambda: f64) -> Vec<f64> {
    values
        .iter()
        .zip(log_w)
        .map(|(&v, &w)| if v > lambda { w } else { f64::NEG_INFINITY })
        .collect()
}

/// Plain MC estimate of `P(F(X) > λ)`.
pub fn mc_tail(
    model: &GaussianGridModel,
    eval: &FunctionalEval,
    func: TailFunctional,
    lambda: f64,
    n: usize,
    seeds: &SeedStream,
) -> Result<TailEstimate> {
    Ok(mc_tail_curve(model, eval, func, &[lambda], n, seeds)?.remove(0))
}

/// Plain MC over a λ grid on shared samples, so the curve is monotone.
pub fn mc_tail_curve(
    model: &GaussianGridModel,
    eval: &FunctionalEval,
    func: TailFunctional,
    lambdas: &[f64],
    n: usize,
    seeds: &SeedStream,
) -> Result<Vec<TailEstimate>> {
    require_samples(n)?;
    let (values, log_w) = sample_functional(model, eval, func, None, n, seeds)?;
    Ok(lambdas
        .iter()
        .map(|&l| estimate_from_terms(l, &indicator_terms(&values, &log_w, l), TailMethod::PlainMc, seeds.seed(), 0.0, 0.0))
        .collect())
}

/// Importance-sampled `P(F(X) > λ)` with `X ~ N(shift, Σ)` reweighted to `N(0, Σ)`.
pub fn cm_tilted_tail(
    model: &GaussianGridModel,
    eval: &FunctionalEval,
    shift: &GridPath,
    func: TailFunctional,
    lambda: f64,
    n: usize,
    seeds: &SeedStream,
) -> Result<TailEstimate> {
    require_samples(n)?;
    let (values, log_w) = sample_functional(model, eval, func, Some(shift), n, seeds)?;
    let max_lw = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = model.cm_quadratic_form(shift)?.sqrt();
    Ok(estimate_from_terms(
        lambda,
        &indicator_terms(&values, &log_w, lambda),
        TailMethod::CmTilted,
        seeds.seed(),
        scale,
        max_lw,
    ))
}

/// `h / √⟨h, Σ⁻¹h⟩`, the shift direction with unit discrete Cameron–Martin norm.
pub fn unit_shift(model: &GaussianGridModel, h: &GridPath) -> Result<GridPath> {
    let q = model.cm_quadratic_form(h)?;
    if !(q > 0.0) {
        return Err(Error::Degenerate("shift direction has zero Cameron–Martin norm".into()));
    }
    Ok(h.scaled(1.0 / q.sqrt()))
}

/// Shift scales `s` with tilt cost `½s² ∈ nats` for a unit-norm direction.
pub fn shift_scales(nats: &[f64]) -> Vec<f64> {
    nats.iter().map(|&v| (2.0 * v).sqrt()).collect()
}

/// One shift of the tilt search, with per-sample `I` values and log-weights.
struct ShiftSamples {
    scale: f64,
    values: Vec<f64>,
    log_w: Vec<f64>,
}

fn shift_family(
    model: &GaussianGridModel,
    eval: &FunctionalEval,
    func: TailFunctional,
    direction: &GridPath,
    scales: &[f64],
    n: usize,
    seeds: &SeedStream,
) -> Result<Vec<ShiftSamples>> {
    scales
        .iter()
        .map(|&s| {
            let (values, log_w) = if s == 0.0 {
                sample_functional(model, eval, func, None, n, seeds)?
            } else {
                sample_functional(model, eval, func, Some(&direction.scaled(s)), n, seeds)?
            };
            Ok(ShiftSamples { scale: s, values, log_w })
        })
        .collect()
}

/// Pick, per λ, the estimate with the largest effective sample size of its
/// weighted terms; ties go to the smaller shift.
fn best_by_ess(cands: Vec<TailEstimate>) -> TailEstimate {
    let mut best: Option<TailEstimate> = None;
    for c in cands {
        best = match best {
            Some(b) if b.ess >= c.ess => Some(b),
            _ => Some(c),
        };
    }
    best.expect("at least one candidate")
}

/// Tilted `P(F(X) > λ)` over a grid, with the shift scale searched per λ.
pub fn cm_tilted_curve(
    model: &GaussianGridModel,
    eval: &FunctionalEval,
    func: TailFunctional,
    direction: &GridPath,
    nats: &[f64],
    lambdas: &[f64],
    n: usize,
    seeds: &SeedStream,
) -> Result<Vec<TailEstimate>> {
    require_samples(n)?;
    let unit = unit_shift(model, direction)?;
    let family = shift_family(model, eval, func, &unit, &shift_scales(nats), n, seeds)?;
    Ok(lambdas
        .iter()
        .map(|&l| {
            best_by_ess(
                family
                    .iter()
                    .map(|f| {
                        let max_lw = f.log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        estimate_from_terms(l, &indicator_terms(&f.values, &f.log_w, l), TailMethod::CmTilted, seeds.seed(), f.scale, max_lw)
                    })
                    .collect(),
            )
        })
        .collect())
}

/// `P(|∫φ(X)dY| > λ) = E[P(|Z| > λ/√I(X))]` estimated over plain and tilted
/// `X`; the shift scale is searched per λ.
pub fn assembled_tail(
    model: &GaussianGridModel,
    eval: &FunctionalEval,
    direction: &GridPath,
    nats: &[f64],
    lambdas: &[f64],
    n: usize,
    seeds: &SeedStream,
) -> Result<Vec<TailEstimate>> {
    require_samples(n)?;
    let unit = unit_shift(model, direction)?;
    let family = shift_family(model, eval, TailFunctional::I, &unit, &shift_scales(nats), n, seeds)?;
    Ok(lambdas
        .iter()
        .map(|&l| best_by_ess(family.iter().map(|f| assembled_estimate(f, l, seeds.seed())).collect()))
        .collect())
}

fn assembled_estimate(f: &ShiftSamples, lambda: f64, seed: u64) -> TailEstimate {
    let terms: Vec<f64> = f
        .values
        .iter()
        .zip(&f.log_w)
        .map(|(&i, &w)| {
            if i > 0.0 {
                w + log_gaussian_tail(lambda / i.sqrt())
            } else if lambda == 0.0 {
                w
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max_lw = f.log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    estimate_from_terms(lambda, &terms, TailMethod::Assembled, seed, f.scale, max_lw)
}

/// The assembled tail with `I(X)` supplied directly (e.g. constant `φ`).
pub fn assembled_from_values(i_values: &[f64], lambdas: &[f64], seed: u64) -> Vec<TailEstimate> {
    let f = ShiftSamples {
        scale: 0.0,
        values: i_values.to_vec(),
        log_w: vec![0.0; i_values.len()],
    };
    lambdas.iter().map(|&l| assembled_estimate(&f, l, seed)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub gamma_hat: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub lambda_range: (f64, f64),
    /// `max(delta_stderr, residual_stderr)`.
    pub gamma_stderr: f64,
    /// Slope spread propagated from the estimates' standard errors.
    pub delta_stderr: f64,
    /// Slope spread from the regression residuals.
    pub residual_stderr: f64,
    pub n_points: usize,
    pub excluded: Vec<f64>,
}

struct LineFit {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    residual_se: f64,
    sxx: f64,
    xbar: f64,
}

fn ols(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let xbar = x.iter().sum::<f64>() / n;
    let ybar = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - xbar).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xbar) * (b - ybar)).sum();
    let syy: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 1.0 };
    let residual_se = if x.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    LineFit {
        slope,
        intercept,
        r_squared,
        residual_se,
        sxx,
        xbar,
    }
}

/// Least-squares `(slope, intercept)` of `log y` against `log x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::InsufficientData("slope fit needs at least two (x, y) pairs".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Degenerate("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let fit = ols(&lx, &ly);
    Ok((fit.slope, fit.intercept))
}

/// Drop the smallest `fraction` of λ values (rounded down).
pub fn fit_window<T: Clone>(items: &[T], lambda: impl Fn(&T) -> f64, fraction: f64) -> Vec<T> {
    let mut sorted = items.to_vec();
    sorted.sort_by(|a, b| lambda(a).total_cmp(&lambda(b)));
    let drop = (fraction * sorted.len() as f64).floor() as usize;
    sorted.split_off(drop.min(sorted.len()))
}

/// Regress `log(−log p̂)` on `log λ` over all usable estimates.
pub fn fit_weibull_exponent(estimates: &[TailEstimate]) -> Result<ExponentFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut sig = Vec::new();
    let mut excluded = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for e in estimates {
        let lp = e.log_p_hat;
        if !(lp.is_finite() && lp < 0.0 && e.lambda > 0.0) {
            excluded.push(e.lambda);
            continue;
        }
        x.push(e.lambda.ln());
        y.push((-lp).ln());
        sig.push(if e.rel_stderr.is_finite() { e.rel_stderr / lp.abs() } else { f64::INFINITY });
        lo = lo.min(e.lambda);
        hi = hi.max(e.lambda);
    }
    if x.is_empty() {
        return Err(Error::InsufficientData("no usable points".into()));
    }
    if x.len() < 4 {
        return Err(Error::InsufficientData(format!("need at least 4 usable points, got {}", x.len())));
    }
    let fit = ols(&x, &y);
    let delta_var: f64 = x
        .iter()
        .zip(&sig)
        .map(|(xi, s)| ((xi - fit.xbar) * s).powi(2))
        .sum::<f64>()
        / (fit.sxx * fit.sxx);
    let delta = delta_var.sqrt();
    Ok(ExponentFit {
        gamma_hat: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        lambda_range: (lo, hi),
        gamma_stderr: delta.max(fit.residual_se),
        delta_stderr: delta,
        residual_stderr: fit.residual_se,
        n_points: x.len(),
        excluded,
    })
}

/// `4α / (1 + 2α − 2H)`, the λ-exponent of the lower curve.
pub fn theory_exponent(h: HurstParam, alpha: f64) -> f64 {
    4.0 * alpha / (1.0 + 2.0 * alpha - h.two_h())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerCurve {
    pub r_star: f64,
    /// `f(r*) = c2 λ²/r* + c4 r*^{2α/(1−2H)}`.
    pub f_min: f64,
}

impl LowerCurve {
    pub fn value(&self) -> f64 {
        (-self.f_min).exp()
    }
}

fn check_curve_params(h: HurstParam, alpha: f64, c2: f64, c4: f64) -> Result<()> {
    if !(c2 > 0.0 && c4 > 0.0 && c2.is_finite() && c4.is_finite()) {
        return Err(Error::param("c2/c4", format!("constants must be positive, got ({c2}, {c4})")));
    }
    if !(alpha > h.value() + 0.5 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("need H + 1/2 < alpha < 1, got {alpha}")));
    }
    h.require_main_regime()?;
    Ok(())
}

pub fn lower_curve_objective(r: f64, lambda: f64, h: HurstParam, alpha: f64, c2: f64, c4: f64) -> f64 {
    c2 * lambda * lambda / r + c4 * r.powf(2.0 * alpha / (1.0 - h.two_h()))
}

/// Closed-form minimiser `r*` of `f` and the resulting lower curve.
pub fn theory_lower_curve(lambda: f64, h: HurstParam, alpha: f64, c2: f64, c4: f64) -> Result<LowerCurve> {
    check_curve_params(h, alpha, c2, c4)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("must be positive, got {lambda}")));
    }
    let one_m = 1.0 - h.two_h();
    let r_star = (c2 * one_m * lambda * lambda / (2.0 * alpha * c4)).powf(one_m / (one_m + 2.0 * alpha));
    Ok(LowerCurve {
        r_star,
        f_min: lower_curve_objective(r_star, lambda, h, alpha, c2, c4),
    })
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > rel_tol * (a.abs() + b.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Two-sided standard normal tail `P(|Z| > r) = erfc(r/√2)`.
pub fn gaussian_tail_lower(r: f64) -> f64 {
    libm::erfc(r * FRAC_1_SQRT_2)
}

/// `ln P(|Z| > r)`, accurate far into the tail.
pub fn log_gaussian_tail(r: f64) -> f64 {
    let x = r * FRAC_1_SQRT_2;
    if x < 25.0 {
        libm::erfc(x).ln()
    } else {
        -x * x + log_erfcx_large(x)
    }
}

/// `ln(e^{x²} erfc(x))` for large `x` from the continued fraction
/// `erfc x = e^{−x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …))))`.
fn log_erfcx_large(x: f64) -> f64 {
    // modified Lentz evaluation of the continued fraction
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..200 {
        let a = 0.5 * k as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    -f.ln() - 0.5 * PI.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub j: f64,
    pub j_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub rho: f64,
    /// Log-log slope over all λ.
    pub slope_full: Option<f64>,
    /// Log-log slope after dropping the smallest `fit_drop` fraction of λ.
    pub slope_window: Option<f64>,
    pub window_intercept: Option<f64>,
    /// `(1 − 2H)/α`.
    pub target: f64,
}

impl SweepResult {
    /// `exp(intercept)·λ^slope` from the windowed fit.
    pub fn window_fit_at(&self, lambda: f64) -> Option<f64> {
        Some((self.window_intercept? + self.slope_window? * lambda.ln()).exp())
    }
}

/// `J(λρh_α)` for each λ, with `h_α` sampled directly on every quadrature level.
pub fn scaling_sweep(
    p: &WeierstrassParams,
    rho: f64,
    phi: &PhiSpec,
    h: HurstParam,
    lambdas: &[f64],
    q: &QuadratureConfig,
    fit_drop: f64,
) -> Result<SweepResult> {
    let h = h.require_main_regime()?;
    p.require_above(h)?;
    if lambdas.is_empty() {
        return Err(Error::param("lambdas", "need at least one λ"));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) || lambdas[0] <= 0.0 {
        return Err(Error::param("lambdas", "must be positive and increasing"));
    }
    let mut per_lambda: Vec<Vec<(u32, f64)>> = vec![Vec::new(); lambdas.len()];
    for &level in &q.levels {
        let base = h_alpha_path(p, level, 1.0)?;
        let quad = SobolevQuadrature::new(h, level)?;
        for (slot, &l) in per_lambda.iter_mut().zip(lambdas) {
            let scale = l * rho;
            let f = CellFunction::from_nodes(&base.map(|v| phi.eval(scale * v)));
            let j = if level <= DIRECT_MAX_LEVEL { quad.j_direct(&f)? } else { quad.j_lagged(&f)? };
            slot.push((level, j));
        }
    }
    let rows: Vec<SweepRow> = lambdas
        .iter()
        .zip(per_lambda)
        .map(|(&lambda, levels)| {
            let qv = QuadValue::from_levels(levels);
            SweepRow {
                lambda,
                j: qv.value,
                j_err: qv.error,
            }
        })
        .collect();
    let fit_of = |rs: &[SweepRow]| {
        let x: Vec<f64> = rs.iter().map(|r| r.lambda).collect();
        let y: Vec<f64> = rs.iter().map(|r| r.j).collect();
        loglog_fit(&x, &y).ok()
    };
    let window = fit_window(&rows, |r| r.lambda, fit_drop);
    let window_fit = fit_of(&window);
    Ok(SweepResult {
        slope_full: fit_of(&rows).map(|f| f.0),
        slope_window: window_fit.map(|f| f.0),
        window_intercept: window_fit.map(|f| f.1),
        rows,
        rho,
        target: (1.0 - h.two_h()) / p.alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallBallRow {
    pub x: f64,
    pub p_hat: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallBallResult {
    pub rows: Vec<SmallBallRow>,
    /// Smallest `C` with `log p̂(x) ≥ −C/x` at every probed `x` with hits.
    pub c_hat: Option<f64>,
    pub c_first_half: Option<f64>,
    pub c_second_half: Option<f64>,
    /// Every probed ball recorded at least one hit.
    pub all_resolved: bool,
}

impl SmallBallResult {
    /// `|C₁ − C₂| / max(C₁, C₂)` across the two halves of the x-list.
    pub fn split_change(&self) -> Option<f64> {
        match (self.c_first_half, self.c_second_half) {
            (Some(a), Some(b)) if a.max(b) > 0.0 => Some((a - b).abs() / a.max(b)),
            _ => None,
        }
    }
}

fn c_bound(rows: &[SmallBallRow]) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter(|r| r.p_hat > 0.0).map(|r| -r.x * r.p_hat.ln()).collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }
}

/// MC estimates of `P(‖X‖_{H−δ} ≤ x^δ)` with grid Hölder norms, on shared samples.
pub fn smallball_probe(
    model: &GaussianGridModel,
    delta: f64,
    xs: &[f64],
    n: usize,
    seeds: &SeedStream,
) -> Result<SmallBallResult> {
    let h = model.hurst().value();
    if !(delta > 0.0 && delta < h) {
        return Err(Error::param("delta", format!("need 0 < delta < H = {h}, got {delta}")));
    }
    if xs.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::param("xs", "ball parameters must lie in (0, 1]"));
    }
    let norms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.rng(i as u64);
            holder_norm(&model.sample(&mut rng), h - delta)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SmallBallRow> = xs
        .iter()
        .map(|&x| {
            let radius = x.powf(delta);
            let hits = norms.iter().filter(|&&v| v <= radius).count();
            let p = hits as f64 / n as f64;
            SmallBallRow {
                x,
                p_hat: p,
                stderr: (p * (1.0 - p) / n as f64).sqrt(),
            }
        })
        .collect();
    let half = rows.len() / 2;
    Ok(SmallBallResult {
        c_hat: c_bound(&rows),
        c_first_half: c_bound(&rows[..half]),
        c_second_half: c_bound(&rows[half..]),
        all_resolved: rows.iter().all(|r| r.p_hat > 0.0),
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct MainExperimentConfig {
    pub hurst: HurstParam,
    pub alpha: f64,
    pub phi: PhiSpec,
    pub path_level: u32,
    pub quad_level: u32,
    pub n_samples: usize,
    pub lambda_grid: Vec<f64>,
    /// Thresholds for the tilted tail of `I(X)` itself.
    pub i_lambda_grid: Vec<f64>,
    /// Tilt costs `½s²` searched per λ; 0 means plain sampling.
    pub tilt_nats: Vec<f64>,
    /// λ values of the growth sweep; empty skips the sweep.
    pub sweep_lambdas: Vec<f64>,
    pub sweep_quad: QuadratureConfig,
    pub rho: f64,
    pub fit_drop: f64,
    pub c2: f64,
    pub c4: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MainReport {
    pub assembled: Vec<TailEstimate>,
    pub i_tail: Vec<TailEstimate>,
    pub theory: Vec<TailEstimate>,
    pub fit: ExponentFit,
    pub sweep: Option<SweepResult>,
    pub theory_exponent: f64,
    pub hurst: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MainSummary {
    #[serde(rename = "H")]
    pub h: f64,
    pub alpha: f64,
    pub gamma_hat: f64,
    pub gamma_stderr: f64,
    pub slope_scaling: Option<f64>,
    pub theory_exponent: f64,
}

impl MainReport {
    pub fn summary(&self) -> MainSummary {
        MainSummary {
            h: self.hurst,
            alpha: self.alpha,
            gamma_hat: self.fit.gamma_hat,
            gamma_stderr: self.fit.gamma_stderr,
            slope_scaling: self.sweep.as_ref().and_then(|s| s.slope_window),
            theory_exponent: self.theory_exponent,
        }
    }

    /// All tail rows as `method,lambda,p_hat,stderr,ess,n,seed`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_tail_csv(w, self.assembled.iter().chain(&self.i_tail).chain(&self.theory))
    }
}

pub fn write_tail_csv<'a, W: Write>(mut w: W, rows: impl IntoIterator<Item = &'a TailEstimate>) -> std::io::Result<()> {
    writeln!(w, "method,lambda,p_hat,stderr,ess,n,seed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:e},{:e},{},{},{}",
            r.method, r.lambda, r.p_hat, r.stderr, r.ess, r.n_samples, r.seed
        )?;
    }
    Ok(())
}

/// Growth sweep, tilted `I`-tail, assembled integral tail, Weibull fit and the
/// theory overlay.
pub fn main_theorem_experiment(cfg: &MainExperimentConfig) -> Result<MainReport> {
    let h = cfg.hurst.require_main_regime()?;
    let p = WeierstrassParams::new(cfg.alpha)?;
    p.require_above(h)?;
    let seeds = SeedStream::new(cfg.seed);
    let model = GaussianGridModel::build(cfg.path_level, h)?;
    let eval = FunctionalEval::new(cfg.phi.clone(), h, cfg.quad_level)?;
    let direction = h_alpha_path(&p, cfg.path_level, 1.0)?;

    let sweep = if cfg.sweep_lambdas.is_empty() {
        None
    } else {
        Some(scaling_sweep(&p, cfg.rho, &cfg.phi, h, &cfg.sweep_lambdas, &cfg.sweep_quad, cfg.fit_drop)?)
    };

    let tail_seeds = seeds.fork("assembled");
    let assembled = if cfg.phi.is_constant() {
        // I(X) = c² for every path; the tilt search is moot
        let c2 = cfg.phi.eval(0.0).powi(2);
        let i_values: Vec<f64> = (0..cfg.n_samples).map(|_| c2).collect();
        assembled_from_values(&i_values, &cfg.lambda_grid, cfg.seed)
    } else {
        assembled_tail(&model, &eval, &direction, &cfg.tilt_nats, &cfg.lambda_grid, cfg.n_samples, &tail_seeds)?
    };
    let i_tail = if cfg.i_lambda_grid.is_empty() || cfg.phi.is_constant() {
        Vec::new()
    } else {
        cm_tilted_curve(
            &model,
            &eval,
            TailFunctional::I,
            &direction,
            &cfg.tilt_nats,
            &cfg.i_lambda_grid,
            cfg.n_samples,
            &seeds.fork("i-tail"),
        )?
    };
    // rows report the experiment seed rather than the derived sub-streams
    let (mut assembled, mut i_tail) = (assembled, i_tail);
    for e in assembled.iter_mut().chain(i_tail.iter_mut()) {
        e.seed = cfg.seed;
    }
    let window = fit_window(&assembled, |e| e.lambda, cfg.fit_drop);
    let fit = fit_weibull_exponent(&window)?;
    let theory = cfg
        .lambda_grid
        .iter()
        .map(|&l| {
            let c = theory_lower_curve(l, h, cfg.alpha, cfg.c2, cfg.c4)?;
            Ok(TailEstimate {
                lambda: l,
                p_hat: c.value(),
                log_p_hat: -c.f_min,
                stderr: 0.0,
                rel_stderr: 0.0,
                method: TailMethod::Theory,
                n_samples: 0,
                seed: cfg.seed,
                ess: 0.0,
                shift_scale: 0.0,
                max_log_weight: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MainReport {
        assembled,
        i_tail,
        theory,
        fit,
        sweep,
        theory_exponent: theory_exponent(h, cfg.alpha),
        hurst: h.value(),
        alpha: cfg.alpha,
    })
}
