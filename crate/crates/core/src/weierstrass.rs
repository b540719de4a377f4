//! The lacunary series `h_α(t) = Σ_{n∈ℤ} 2^{−nα} sin(2^n π t)` and the
//! scale constants built from it.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbm::{GridPath, HurstParam};
use crate::functionals::{PathSource, PhiSpec};
use crate::rng::SeedStream;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_T_MAX: f64 = 1_048_576.0;

/// Truncation window `n_neg..=n_pos` certified to absolute error `tol` for `|t| ≤ t_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeierstrassParams {
    pub alpha: f64,
    pub tol: f64,
    pub t_max: f64,
    pub n_neg: i32,
    pub n_pos: i32,
}

impl WeierstrassParams {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_window(alpha, DEFAULT_TOL, DEFAULT_T_MAX)
    }

    pub fn with_window(alpha: f64, tol: f64, t_max: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::param("tol", format!("must be positive, got {tol}")));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::param("t_max", format!("must be positive, got {t_max}")));
        }
        // Σ_{n>N} 2^{−nα} = 2^{−(N+1)α} / (1 − 2^{−α}) ≤ tol/2
        let pos_ratio = 1.0 - (-alpha).exp2();
        let mut n_pos = 0i32;
        while (-(n_pos + 1) as f64 * alpha).exp2() / pos_ratio > 0.5 * tol {
            n_pos += 1;
        }
        // Σ_{n<N} π t_max 2^{n(1−α)} = π t_max 2^{(N−1)(1−α)} / (1 − 2^{−(1−α)}) ≤ tol/2
        let beta = 1.0 - alpha;
        let neg_ratio = 1.0 - (-beta).exp2();
        let mut n_neg = 0i32;
        while PI * t_max * ((n_neg - 1) as f64 * beta).exp2() / neg_ratio > 0.5 * tol {
            n_neg -= 1;
        }
        Ok(Self {
            alpha,
            tol,
            t_max,
            n_neg,
            n_pos,
        })
    }

    /// Pair with a Hurst exponent, requiring `α > H + 1/2`.
    pub fn require_above(&self, h: HurstParam) -> Result<()> {
        if self.alpha > h.value() + 0.5 {
            Ok(())
        } else {
            Err(Error::param(
                "alpha",
                format!("alpha must exceed H + 1/2 = {}, got {}", h.value() + 0.5, self.alpha),
            ))
        }
    }

    fn check(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t.abs() > self.t_max {
            return Err(Error::Uncertified {
                t,
                limit: self.t_max,
            });
        }
        Ok(())
    }
}

/// `sin(π x)` with exact range reduction; returns exactly 0 at integers.
fn sin_pi(x: f64) -> f64 {
    let r = x % 2.0;
    if r == r.trunc() {
        return 0.0;
    }
    let r = if r > 1.0 {
        r - 2.0
    } else if r < -1.0 {
        r + 2.0
    } else {
        r
    };
    // r in (−1, 1); fold into [−1/2, 1/2]
    if r > 0.5 {
        (PI * (1.0 - r)).sin()
    } else if r < -0.5 {
        -(PI * (1.0 + r)).sin()
    } else {
        (PI * r).sin()
    }
}

/// `Σ_{n=lo}^{hi} 2^{−nα} sin(2^n π t)`.
fn partial_sum(t: f64, alpha: f64, lo: i32, hi: i32) -> f64 {
    if t == 0.0 || lo > hi {
        return 0.0;
    }
    // Terms with 2^n π|t| ≤ 1/2 are collapsed into a Taylor series of geometric sums.
    let cut = (0.5 / (PI * t.abs())).log2().floor();
    let b = if cut < lo as f64 {
        lo - 1
    } else {
        (cut as i64).min(hi as i64) as i32
    };
    let mut total = 0.0;
    if b >= lo {
        let y = (b as f64).exp2() * PI * t;
        let width = (b - lo + 1) as f64;
        let lead = (-(b as f64) * alpha).exp2();
        let mut power = y;
        let mut fact = 1.0;
        for j in 0..30 {
            let e = (2 * j + 1) as f64 - alpha;
            let geom = (1.0 - (-e * width).exp2()) / (1.0 - (-e).exp2());
            let term = lead * power / fact * geom;
            total += if j % 2 == 0 { term } else { -term };
            if term.abs() < 1e-300 || term.abs() < 1e-18 * total.abs() {
                break;
            }
            power *= y * y;
            fact *= ((2 * j + 2) * (2 * j + 3)) as f64;
        }
    }
    for n in (b + 1).max(lo)..=hi {
        let scale = (n as f64).exp2();
        total += (-(n as f64) * alpha).exp2() * sin_pi(scale * t);
    }
    total
}

/// `(f_α(t), g_α(t))`: the `n ≤ 0` and `n ≥ 1` parts of the series.
pub fn eval_f_g(t: f64, p: &WeierstrassParams) -> Result<(f64, f64)> {
    p.check(t)?;
    Ok((
        partial_sum(t, p.alpha, p.n_neg, 0),
        partial_sum(t, p.alpha, 1, p.n_pos),
    ))
}

pub fn eval_h_alpha(t: f64, p: &WeierstrassParams) -> Result<f64> {
    let (f, g) = eval_f_g(t, p)?;
    Ok(f + g)
}

/// `scale · h_α` sampled on the level-`level` dyadic grid of `[0, 1]`.
pub fn h_alpha_path(p: &WeierstrassParams, level: u32, scale: f64) -> Result<GridPath> {
    let n = 1usize << level;
    let values: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|k| partial_full(k as f64 / n as f64, p) * scale)
        .collect();
    GridPath::pinned(level, values)
}

/// `scale · h_α` as a path on `[0, 1]`, sampled exactly at any grid level.
#[derive(Debug, Clone, Copy)]
pub struct WeierstrassPath {
    pub params: WeierstrassParams,
    pub scale: f64,
}

impl PathSource for WeierstrassPath {
    fn grid(&self, level: u32) -> Result<GridPath> {
        h_alpha_path(&self.params, level, self.scale)
    }
}

fn partial_full(t: f64, p: &WeierstrassParams) -> f64 {
    partial_sum(t, p.alpha, p.n_neg, 0) + partial_sum(t, p.alpha, 1, p.n_pos)
}

fn eval_g_unchecked(t: f64, p: &WeierstrassParams) -> f64 {
    partial_sum(t, p.alpha, 1, p.n_pos)
}

/// `L = π Σ_{n≤0} 2^{n(1−α)}`, the Lipschitz constant of `f_α`.
pub fn lipschitz_constant(alpha: f64) -> f64 {
    PI / (1.0 - (-(1.0 - alpha)).exp2())
}

/// `|g(t) − g(s)| / |t − s|^α`.
pub fn holder_ratio(s: f64, t: f64, p: &WeierstrassParams) -> Result<f64> {
    if s == t {
        return Err(Error::param("t", "Hölder ratio needs distinct points"));
    }
    let (_, gs) = eval_f_g(s, p)?;
    let (_, gt) = eval_f_g(t, p)?;
    Ok((gt - gs).abs() / (t - s).abs().powf(p.alpha))
}

/// Seeded probe of `sup |g(t) − g(s)| / |t − s|^α` over `n_pairs` pairs with
/// log-uniform gaps in `[2^{−24}, 1]`.
pub fn holder_constant_probe(p: &WeierstrassParams, n_pairs: usize) -> f64 {
    holder_probe_with(p, n_pairs, |t| eval_g_unchecked(t, p))
}

pub fn holder_probe_with(p: &WeierstrassParams, n_pairs: usize, g: impl Fn(f64) -> f64 + Sync) -> f64 {
    let seeds = SeedStream::new(0x486f_6c64);
    (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.rng(i as u64);
            let s: f64 = rng.random();
            let gap = (-24.0 * rng.random::<f64>()).exp2();
            (g(s + gap) - g(s)).abs() / gap.powf(p.alpha)
        })
        .reduce(|| 0.0, f64::max)
}

/// Smallest `m` with `|g(2^{−m})| ≥ 2L·2^{−m}`; returns `(m, v₀ = 2^{−m})`.
pub fn find_v0(p: &WeierstrassParams) -> Result<(u32, f64)> {
    let l = lipschitz_constant(p.alpha);
    for m in 1..=1000u32 {
        let t = (-(m as f64)).exp2();
        if eval_g_unchecked(t, p).abs() >= 2.0 * l * t {
            return Ok((m, t));
        }
    }
    Err(Error::Degenerate("no admissible v0 found for m ≤ 1000".into()))
}

/// Non-degeneracy constants of `φ` attached to the `h_α` scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonDegData {
    pub r: f64,
    pub eta: f64,
    pub rho: f64,
}

impl NonDegData {
    pub fn new(r: f64, eta: f64, rho: f64) -> Result<Self> {
        if !(r > 0.0 && eta > 0.0 && rho > 0.0) {
            return Err(Error::param("nondeg", format!("need r, eta, rho > 0, got ({r}, {eta}, {rho})")));
        }
        Ok(Self { r, eta, rho })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaEstimate {
    pub eta: f64,
    /// Range of window starts `x` that was probed.
    pub domain: (f64, f64),
    pub periodic: bool,
}

/// Probe range used for non-periodic `φ`.
pub const NONPERIODIC_DOMAIN: (f64, f64) = (-10.0, 10.0);

/// `min_x max_{y∈[x,x+r]} |φ′(y)|` over `resolution` window starts.
pub fn nondeg_eta(phi: &PhiSpec, r: f64, resolution: usize) -> Result<EtaEstimate> {
    match phi.period {
        Some(period) => nondeg_eta_on(phi, r, resolution, (0.0, period), true),
        None => nondeg_eta_on(phi, r, resolution, NONPERIODIC_DOMAIN, false),
    }
}

pub fn nondeg_eta_on(
    phi: &PhiSpec,
    r: f64,
    resolution: usize,
    domain: (f64, f64),
    periodic: bool,
) -> Result<EtaEstimate> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param("r", format!("window length must be positive, got {r}")));
    }
    if resolution < 2 || !(domain.1 > domain.0) {
        return Err(Error::param("resolution", "need at least 2 probe points on a nonempty domain"));
    }
    let (lo, hi) = domain;
    let step = (hi - lo) / resolution as f64;
    let width = (r / step + 1e-9).floor() as usize;
    let n_y = resolution + width + 1;
    let dphi: Vec<f64> = (0..n_y).map(|i| phi.deriv(lo + i as f64 * step).abs()).collect();
    // sliding-window maximum over y-indices i..=i+width
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut eta = f64::INFINITY;
    for j in 0..n_y {
        while window.back().is_some_and(|&b| dphi[b] <= dphi[j]) {
            window.pop_back();
        }
        window.push_back(j);
        if j >= width {
            let start = j - width;
            while window.front().is_some_and(|&f| f < start) {
                window.pop_front();
            }
            if start <= resolution {
                eta = eta.min(dphi[window[0]]);
            }
        }
    }
    Ok(EtaEstimate {
        eta,
        domain,
        periodic,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoData {
    pub r: f64,
    /// `min_k osc_{[k,k+1]} h_α` on the base v-grid.
    pub d_hat: f64,
    /// Same quantity on the 4× refined grid.
    pub d_hat_refined: f64,
    pub k_argmin: usize,
    pub rho: f64,
    pub points_per_unit: usize,
}

impl RhoData {
    pub fn refinement_change(&self) -> f64 {
        (self.d_hat_refined - self.d_hat).abs() / self.d_hat_refined
    }

    pub fn with_eta(&self, eta: f64) -> Result<NonDegData> {
        NonDegData::new(self.r, eta, self.rho)
    }
}

pub const DEFAULT_POINTS_PER_UNIT: usize = 4096;

/// `ρ = 2^α r / D̂` with `D̂ = min_{k=1..k_max} (max − min of h_α on [k, k+1])`.
pub fn compute_rho(p: &WeierstrassParams, r: f64, k_max: usize) -> Result<RhoData> {
    compute_rho_with(p, r, k_max, DEFAULT_POINTS_PER_UNIT)
}

pub fn compute_rho_with(p: &WeierstrassParams, r: f64, k_max: usize, points_per_unit: usize) -> Result<RhoData> {
    if k_max < 8 {
        return Err(Error::param("k_max", format!("must be at least 8, got {k_max}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param("r", format!("must be positive, got {r}")));
    }
    if points_per_unit < 2 {
        return Err(Error::param("points_per_unit", "need at least 2"));
    }
    p.check((k_max + 1) as f64)?;
    let (d_hat, k_argmin) = min_oscillation(p, k_max, points_per_unit);
    let (d_hat_refined, _) = min_oscillation(p, k_max, 4 * points_per_unit);
    if d_hat < 1e-12 {
        return Err(Error::Degenerate(format!("oscillation infimum {d_hat:e} below 1e-12")));
    }
    Ok(RhoData {
        r,
        d_hat,
        d_hat_refined,
        k_argmin,
        rho: p.alpha.exp2() * r / d_hat,
        points_per_unit,
    })
}

fn min_oscillation(p: &WeierstrassParams, k_max: usize, n: usize) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for k in 1..=k_max {
        let (lo, hi) = (0..=n)
            .into_par_iter()
            .map(|i| {
                let v = partial_full(k as f64 + i as f64 / n as f64, p);
                (v, v)
            })
            .reduce(
                || (f64::INFINITY, f64::NEG_INFINITY),
                |a, b| (a.0.min(b.0), a.1.max(b.1)),
            );
        if hi - lo < best.0 {
            best = (hi - lo, k);
        }
    }
    best
}

/// Parameter constraints of the localization argument:
/// `0<δ<2H−½`, `0<ε<1`, `ε/δ<2`, `max{(1+δ−3H)/α,0}<σ<(1−2H)/α`,
/// `(1−2H)/(2α)<β<(1−2H)/((2−ε)α)`.
pub fn check_localization_params(h: HurstParam, alpha: f64, delta: f64, eps: f64, sigma: f64, beta: f64) -> bool {
    let h = h.value();
    let delta_ok = delta > 0.0 && delta < 2.0 * h - 0.5;
    let eps_ok = eps > 0.0 && eps < 1.0 && eps / delta < 2.0;
    let sigma_ok = ((1.0 + delta - 3.0 * h) / alpha).max(0.0) < sigma && sigma < (1.0 - 2.0 * h) / alpha;
    let beta_ok = (1.0 - 2.0 * h) / (2.0 * alpha) < beta && beta < (1.0 - 2.0 * h) / ((2.0 - eps) * alpha);
    delta_ok && eps_ok && sigma_ok && beta_ok
}

/// Smallest `M` such that `ε = 2^{−M}` satisfies
/// `Lε + L′ε^α < η / (4(‖φ″‖∞ + 1)ρ)`. Reported only.
pub fn composition_scale(p: &WeierstrassParams, holder_const: f64, phi: &PhiSpec, data: &NonDegData) -> Option<u32> {
    let l = lipschitz_constant(p.alpha);
    let target = data.eta / (4.0 * (phi.sup_ddphi + 1.0) * data.rho);
    (0..=200u32).find(|&m| {
        let eps = (-(m as f64)).exp2();
        l * eps + holder_const * eps.powf(p.alpha) < target
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn params(alpha: f64) -> WeierstrassParams {
        WeierstrassParams::new(alpha).unwrap()
    }

    #[test]
    fn window_is_certified() {
        let p = params(0.9);
        let tail_pos = (-(p.n_pos + 1) as f64 * 0.9).exp2() / (1.0 - (-0.9f64).exp2());
        assert!(tail_pos <= 0.5 * p.tol);
        assert!(p.n_neg < -500);
        assert!(eval_h_alpha(2.0 * DEFAULT_T_MAX, &p).is_err());
        assert!(WeierstrassParams::new(1.0).is_err());
    }

    #[test]
    fn sin_pi_reduction() {
        assert_eq!(sin_pi(3.0), 0.0);
        assert_eq!(sin_pi(-1e17), 0.0);
        assert!((sin_pi(0.5) - 1.0).abs() < 1e-16);
        assert!((sin_pi(1.25) + FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((sin_pi(-0.75) + FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn matches_extended_precision_oracle() {
        assert_eq!(eval_h_alpha(0.0, &params(0.9)).unwrap(), 0.0);
        // 50-digit direct summation over n ∈ [−1500, 200)
        let cases = [
            (1.0, 0.8, 19.828478089136360105),
            (0.3, 0.9, 14.390464713844515501),
            (0.7, 0.9, 30.443039723577714610),
            (5.25, 0.6, 23.846833228351810658),
        ];
        for (t, a, want) in cases {
            let p = params(a);
            let got = eval_h_alpha(t, &p).unwrap();
            assert!((got - want).abs() < p.tol, "t={t} a={a}: {got} vs {want}");
        }
    }

    #[test]
    fn taylor_block_agrees_with_direct_sum() {
        let p = params(0.85);
        for &t in &[1e-6, 0.01, 0.3, 3.7, 1000.5] {
            let direct: f64 = (p.n_neg..=0)
                .map(|n| (-(n as f64) * p.alpha).exp2() * ((n as f64).exp2() * PI * t).sin())
                .sum();
            let (f, _) = eval_f_g(t, &p).unwrap();
            assert!((f - direct).abs() < 1e-11 * (1.0 + direct.abs()), "{t}: {f} {direct}");
        }
    }

    #[test]
    fn scaling_and_periodicity() {
        let p = params(0.9);
        let base = eval_h_alpha(0.3, &p).unwrap();
        let doubled = eval_h_alpha(0.6, &p).unwrap();
        assert!((doubled - 0.9f64.exp2() * base).abs() <= 2.0 * p.tol);
        let (_, g0) = eval_f_g(0.3, &p).unwrap();
        let (_, g1) = eval_f_g(1.3, &p).unwrap();
        assert!((g1 - g0).abs() <= 2.0 * p.tol);
    }

    #[test]
    fn lower_holder_at_dyadics() {
        for &a in &[0.6, 0.85, 0.9] {
            let p = params(a);
            // at m = 1 the sum is empty and g(1/2) = 0
            assert_eq!(eval_f_g(0.5, &p).unwrap().1, 0.0);
            for m in 2..=12 {
                let (_, g) = eval_f_g((-(m as f64)).exp2(), &p).unwrap();
                assert!(g >= (-((m - 1) as f64) * a).exp2(), "a={a} m={m} g={g}");
                let ratio = holder_ratio(0.0, (-(m as f64)).exp2(), &p).unwrap();
                assert!(ratio >= 1.0);
            }
        }
    }

    #[test]
    fn f_is_lipschitz() {
        let p = params(0.9);
        let l = lipschitz_constant(0.9);
        let mut rng = SeedStream::new(5).rng(0);
        for _ in 0..10_000 {
            let s: f64 = 4.0 * rng.random::<f64>() - 2.0;
            let t: f64 = 4.0 * rng.random::<f64>() - 2.0;
            if s == t {
                continue;
            }
            let (fs, _) = eval_f_g(s, &p).unwrap();
            let (ft, _) = eval_f_g(t, &p).unwrap();
            assert!((ft - fs).abs() <= l * (t - s).abs() + 2.0 * p.tol);
        }
    }

    #[test]
    fn holder_probe_is_stable() {
        let p = params(0.9);
        let a = holder_constant_probe(&p, 10_000);
        let b = holder_constant_probe(&p, 20_000);
        assert!(a.is_finite() && a > 0.0);
        assert!((b - a).abs() / a < 0.1, "{a} {b}");
        assert_eq!(holder_probe_with(&p, 100, |_| 0.0), 0.0);
    }

    #[test]
    fn eta_of_sine() {
        let sin = PhiSpec::sin();
        let e = nondeg_eta(&sin, PI / 2.0, 10_000).unwrap();
        assert!(e.periodic);
        assert!((e.eta - FRAC_1_SQRT_2).abs() < 1e-3, "{}", e.eta);
        let e = nondeg_eta(&sin, PI, 10_000).unwrap();
        assert!((e.eta - 1.0).abs() < 1e-3);
        let c = nondeg_eta(&PhiSpec::constant(2.0), 1.0, 1000).unwrap();
        assert_eq!(c.eta, 0.0);
        let id = nondeg_eta(&PhiSpec::identity_for_tests(), 1.0, 100).unwrap();
        assert_eq!(id.domain, NONPERIODIC_DOMAIN);
        let mut prev = 0.0;
        for i in 1..=20 {
            let e = nondeg_eta(&sin, 0.2 * i as f64, 2000).unwrap().eta;
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn rho_constants() {
        let p = params(0.9);
        let a = compute_rho_with(&p, 1.0, 8, 1024).unwrap();
        let b = compute_rho_with(&p, 2.0, 8, 1024).unwrap();
        assert_eq!(b.rho, 2.0 * a.rho);
        assert!(a.refinement_change() < 0.05);
        let (m, v0) = find_v0(&p).unwrap();
        assert!(m > 1);
        assert!(a.d_hat >= lipschitz_constant(0.9) * v0);
        assert!(compute_rho(&p, 1.0, 4).is_err());
    }

    #[test]
    fn localization_predicate() {
        let h = HurstParam::new(0.35).unwrap();
        // (1 + δ − 3H)/α = 0.1111 rules out σ = 0.1; σ = 0.2 is admissible
        assert!(!check_localization_params(h, 0.9, 0.15, 0.25, 0.1, 0.18));
        assert!(check_localization_params(h, 0.9, 0.15, 0.25, 0.2, 0.18));
        assert!(!check_localization_params(h, 0.9, 0.2, 0.25, 0.2, 0.18));
        assert!(!check_localization_params(h, 0.9, 0.15, 0.3, 0.2, 0.18));
    }

    #[test]
    fn jordan_inequality() {
        for i in 0..=1000 {
            let x = 0.5 * PI * i as f64 / 1000.0;
            assert!(x.sin() >= 2.0 / PI * x - 1e-15);
        }
    }
}
