//! Path functionals: Hölder norms, the fractional Sobolev norm, `J(x)`, the
//! boundary term and `I(x) = H(1−2H)(J(x) + B(x))`.

mod kernel;
mod phi;

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;

pub use kernel::{edge_integral, j_cells_direct, j_cells_lagged, KernelTable};
pub use phi::{PhiKind, PhiSpec};

use crate::error::{Error, Result};
use crate::fbm::{fgn_autocovariance, GridPath, HurstParam};

fn unit_rule(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(n.try_into().expect("positive degree"));
    rule.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

/// 8-point Gauss–Legendre rule on `[0, 1]`.
pub(crate) fn gl8() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| unit_rule(8))
}

/// 20-point Gauss–Legendre rule on `[0, 1]`.
pub(crate) fn gl20() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| unit_rule(20))
}

/// Levels above this switch `j_functional` from the direct pair sweep to FFT lag sums.
pub const DIRECT_MAX_LEVEL: u32 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureConfig {
    /// Strictly increasing quadrature grid levels; the last two give the error estimate.
    pub levels: Vec<u32>,
    /// Hölder exponent expected of the integrand, used for the convergence-rate hint.
    pub gamma_hint: f64,
}

impl QuadratureConfig {
    pub fn new(levels: Vec<u32>, gamma_hint: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::param("levels", "need at least one quadrature level"));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("levels", format!("must be strictly increasing, got {levels:?}")));
        }
        if levels[levels.len() - 1] > 22 {
            return Err(Error::param("levels", "levels above 22 are not supported"));
        }
        if !(gamma_hint > 0.0 && gamma_hint <= 1.0) {
            return Err(Error::param("gamma_hint", format!("must lie in (0, 1], got {gamma_hint}")));
        }
        Ok(Self { levels, gamma_hint })
    }

    pub fn levels(levels: &[u32]) -> Result<Self> {
        Self::new(levels.to_vec(), 1.0)
    }

    pub fn finest(&self) -> u32 {
        self.levels[self.levels.len() - 1]
    }

    /// Expected decay exponent of the refinement error per level, `2γ + 2H − 1`.
    pub fn expected_rate(&self, h: HurstParam) -> f64 {
        2.0 * self.gamma_hint + h.two_h() - 1.0
    }
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            levels: vec![10, 11, 12],
            gamma_hint: 1.0,
        }
    }
}

/// A functional value at the finest level with its refinement history.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadValue {
    pub value: f64,
    /// `|v_finest − v_previous|`; infinite when only one level was computed.
    pub error: f64,
    pub per_level: Vec<(u32, f64)>,
}

impl QuadValue {
    pub(crate) fn from_levels(per_level: Vec<(u32, f64)>) -> Self {
        let value = per_level[per_level.len() - 1].1;
        let error = if per_level.len() >= 2 {
            (value - per_level[per_level.len() - 2].1).abs()
        } else {
            f64::INFINITY
        };
        Self {
            value,
            error,
            per_level,
        }
    }
}

/// Something that can be sampled on any dyadic grid of `[0, 1]`.
pub trait PathSource: Sync {
    fn grid(&self, level: u32) -> Result<GridPath>;
}

impl PathSource for GridPath {
    fn grid(&self, level: u32) -> Result<GridPath> {
        if level >= self.level() {
            return self.refine(level);
        }
        let stride = 1usize << (self.level() - level);
        let values = self.values().iter().step_by(stride).copied().collect();
        GridPath::new(level, values)
    }
}

/// A path given by a closure of time.
pub struct FnPath<F>(pub F);

impl<F: Fn(f64) -> f64 + Sync> PathSource for FnPath<F> {
    fn grid(&self, level: u32) -> Result<GridPath> {
        let n = 1usize << level;
        let values = (0..=n).into_par_iter().map(|k| (self.0)(k as f64 / n as f64)).collect();
        GridPath::new(level, values)
    }
}

/// On each cell `k` of a level-`level` grid, `f = center[k] + incr[k]·u`, `u ∈ [−½, ½]`.
/// Neighbouring cells need not agree at their common endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFunction {
    level: u32,
    center: Vec<f64>,
    incr: Vec<f64>,
}

impl CellFunction {
    /// The continuous piecewise-linear interpolant of grid values.
    pub fn from_nodes(path: &GridPath) -> Self {
        let v = path.values();
        Self {
            level: path.level(),
            center: v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
            incr: v.windows(2).map(|w| w[1] - w[0]).collect(),
        }
    }

    /// A step function with one value per cell.
    pub fn steps(level: u32, values: Vec<f64>) -> Result<Self> {
        let n = 1usize << level;
        if values.len() != n {
            return Err(Error::param("values", format!("level {level} needs {n} cell values, got {}", values.len())));
        }
        Ok(Self {
            level,
            center: values,
            incr: vec![0.0; n],
        })
    }

    /// `1_{[a, b]}` for dyadic `a < b` resolved by the grid.
    pub fn indicator(level: u32, a: f64, b: f64) -> Result<Self> {
        let n = 1usize << level;
        let values = (0..n)
            .map(|k| {
                let mid = (k as f64 + 0.5) / n as f64;
                if mid > a && mid < b {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Self::steps(level, values)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn n_cells(&self) -> usize {
        self.center.len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_cells() as f64
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn incr(&self) -> &[f64] {
        &self.incr
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            level: self.level,
            center: self.center.iter().map(|v| c * v).collect(),
            incr: self.incr.iter().map(|v| c * v).collect(),
        }
    }

    fn check_finite(&self) -> Result<()> {
        for (what, data) in [("cell centers", &self.center), ("cell increments", &self.incr)] {
            if let Some(index) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what, index });
            }
        }
        Ok(())
    }
}

/// Quadrature state for one `(H, level)` pair, reusable across many functions.
#[derive(Debug, Clone)]
pub struct SobolevQuadrature {
    hurst: HurstParam,
    level: u32,
    table: KernelTable,
}

impl SobolevQuadrature {
    pub fn new(hurst: HurstParam, level: u32) -> Result<Self> {
        require_rough(hurst)?;
        if level > 22 {
            return Err(Error::param("level", format!("level {level} too large")));
        }
        Ok(Self {
            hurst,
            level,
            table: KernelTable::new(hurst.two_h(), 1usize << level),
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    fn check(&self, f: &CellFunction) -> Result<()> {
        if f.level != self.level {
            return Err(Error::GridMismatch {
                expected: self.level,
                found: f.level,
            });
        }
        f.check_finite()
    }

    /// Simplex double integral, direct pair sweep.
    pub fn j_direct(&self, f: &CellFunction) -> Result<f64> {
        self.check(f)?;
        Ok(j_cells_direct(f, &self.table))
    }

    /// Simplex double integral, FFT lag sums.
    pub fn j_lagged(&self, f: &CellFunction) -> Result<f64> {
        self.check(f)?;
        Ok(j_cells_lagged(f, &self.table))
    }

    /// `(1/(1−2H)) ∫ f² (t^{2H−1} + (1−t)^{2H−1})`.
    pub fn boundary(&self, f: &CellFunction) -> Result<f64> {
        self.check(f)?;
        Ok(edge_integral(f, &self.table) / (1.0 - self.hurst.two_h()))
    }

    /// `H(1−2H)(J + B)` with the lagged J.
    pub fn sobolev_sq(&self, f: &CellFunction) -> Result<f64> {
        let h = self.hurst.value();
        let j = self.j_lagged(f)?;
        let b = self.boundary(f)?;
        Ok((h * (1.0 - 2.0 * h) * (j + b)).max(0.0))
    }
}

fn require_rough(h: HurstParam) -> Result<()> {
    if h.value() < 0.5 {
        Ok(())
    } else {
        Err(Error::param("H", format!("the Sobolev representation needs H < 1/2, got {}", h.value())))
    }
}

/// Fractional Sobolev squared norm of the piecewise-linear interpolant of `f`.
pub fn frac_sobolev_sq(f: &GridPath, h: HurstParam) -> Result<f64> {
    frac_sobolev_sq_cells(&CellFunction::from_nodes(f), h)
}

pub fn frac_sobolev_sq_cells(f: &CellFunction, h: HurstParam) -> Result<f64> {
    let h = h.require_main_regime()?;
    SobolevQuadrature::new(h, f.level())?.sobolev_sq(f)
}

fn composed_cells(x: &dyn PathSource, phi: &PhiSpec, level: u32) -> Result<CellFunction> {
    let grid = x.grid(level)?;
    grid.check_finite("path")?;
    Ok(CellFunction::from_nodes(&grid.map(|v| phi.eval(v))))
}

fn per_level(
    q: &QuadratureConfig,
    h: HurstParam,
    eval: impl Fn(&SobolevQuadrature) -> Result<f64>,
) -> Result<QuadValue> {
    let mut out = Vec::with_capacity(q.levels.len());
    for &level in &q.levels {
        let quad = SobolevQuadrature::new(h, level)?;
        out.push((level, eval(&quad)?));
    }
    Ok(QuadValue::from_levels(out))
}

/// `J(x) = ∬_{s<t} (φ(x_t) − φ(x_s))² (t − s)^{2H−2}`.
pub fn j_functional(x: &dyn PathSource, phi: &PhiSpec, h: HurstParam, q: &QuadratureConfig) -> Result<QuadValue> {
    require_rough(h)?;
    per_level(q, h, |quad| {
        let f = composed_cells(x, phi, quad.level())?;
        if quad.level() <= DIRECT_MAX_LEVEL {
            quad.j_direct(&f)
        } else {
            quad.j_lagged(&f)
        }
    })
}

/// `(1/(1−2H)) ∫₀¹ φ(x_t)² (t^{2H−1} + (1−t)^{2H−1}) dt`.
pub fn boundary_term(x: &dyn PathSource, phi: &PhiSpec, h: HurstParam, q: &QuadratureConfig) -> Result<QuadValue> {
    require_rough(h)?;
    per_level(q, h, |quad| quad.boundary(&composed_cells(x, phi, quad.level())?))
}

/// `I(x)`, the fractional Sobolev squared norm of `φ∘x`.
pub fn i_functional(x: &dyn PathSource, phi: &PhiSpec, h: HurstParam, q: &QuadratureConfig) -> Result<QuadValue> {
    let h = h.require_main_regime()?;
    per_level(q, h, |quad| quad.sobolev_sq(&composed_cells(x, phi, quad.level())?))
}

/// Squared norm of a step function through the increment covariance:
/// `Σ_{ij} a_i a_j E[ΔX_i ΔX_j]`.
pub fn hnorm_sq_steps(steps: &[f64], h: HurstParam) -> Result<f64> {
    let n = steps.len();
    if !n.is_power_of_two() {
        return Err(Error::param("steps", format!("need 2^m cell values, got {n}")));
    }
    let two_h = h.two_h();
    let lags: Vec<f64> = (1..n)
        .into_par_iter()
        .map(|k| {
            let s: f64 = (0..n - k).map(|i| steps[i] * steps[i + k]).sum();
            2.0 * fgn_autocovariance(k, two_h) * s
        })
        .collect();
    let diag: f64 = steps.iter().map(|a| a * a).sum();
    Ok((1.0 / n as f64).powf(two_h) * (diag + lags.iter().sum::<f64>()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HolderMode {
    /// All grid pairs, O(n²).
    Exact,
    /// Only lags `2^j`, O(n log n); a lower bound for the exact value.
    Dyadic,
}

/// `max |x_t − x_s| / |t − s|^γ` over grid pairs.
pub fn holder_norm(x: &GridPath, gamma: f64) -> Result<f64> {
    holder_norm_with(x, gamma, HolderMode::Exact)
}

pub fn holder_norm_with(x: &GridPath, gamma: f64, mode: HolderMode) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::param("gamma", format!("must lie in (0, 1], got {gamma}")));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("Hölder norm needs at least two points".into()));
    }
    let v = x.values();
    let n = x.n_cells();
    let lags: Vec<usize> = match mode {
        HolderMode::Exact => (1..=n).collect(),
        HolderMode::Dyadic => (0..=x.level()).map(|j| 1usize << j).collect(),
    };
    let dt = x.dt();
    Ok(lags
        .into_par_iter()
        .map(|k| {
            let span = (v[k..].iter().zip(v).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
            span / (k as f64 * dt).powf(gamma)
        })
        .reduce(|| 0.0, f64::max))
}
