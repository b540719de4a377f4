//! Finite-dimensional fractional Brownian motion on uniform dyadic grids.

mod circulant;
mod model;

pub use circulant::CirculantSampler;
pub use model::GaussianGridModel;

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};

/// Hurst exponent, validated to lie in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::param("H", format!("must lie in (0, 1), got {h}")))
        }
    }

    /// Like [`HurstParam::new`] but also requires the rough regime `1/4 < H < 1/2`.
    pub fn main_regime(h: f64) -> Result<Self> {
        Self::new(h)?.require_main_regime()
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn in_main_regime(self) -> bool {
        self.0 > 0.25 && self.0 < 0.5
    }

    pub fn require_main_regime(self) -> Result<Self> {
        if self.in_main_regime() {
            Ok(self)
        } else {
            Err(Error::param(
                "H",
                format!("must lie in the main regime (1/4, 1/2), got {}", self.0),
            ))
        }
    }

    /// `2H`, the exponent of the variance `t^{2H}`.
    pub fn two_h(self) -> f64 {
        2.0 * self.0
    }
}

/// A real path sampled on the dyadic grid `k / 2^level`, `k = 0..=2^level`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    level: u32,
    values: Vec<f64>,
    origin_pinned: bool,
}

impl GridPath {
    pub fn new(level: u32, values: Vec<f64>) -> Result<Self> {
        let expected = grid_len(level);
        if values.len() != expected {
            return Err(Error::param(
                "values",
                format!("level {level} needs {expected} values, got {}", values.len()),
            ));
        }
        Ok(Self {
            level,
            values,
            origin_pinned: false,
        })
    }

    /// A path that starts at zero, as fBM and Cameron–Martin paths do.
    pub fn pinned(level: u32, values: Vec<f64>) -> Result<Self> {
        let mut path = Self::new(level, values)?;
        if path.values[0] != 0.0 {
            return Err(Error::param(
                "values",
                format!("pinned path must start at 0, got {}", path.values[0]),
            ));
        }
        path.origin_pinned = true;
        Ok(path)
    }

    pub fn from_fn(level: u32, f: impl Fn(f64) -> f64) -> Self {
        let n = 1usize << level;
        let dt = 1.0 / n as f64;
        let values = (0..=n).map(|k| f(k as f64 * dt)).collect();
        Self {
            level,
            values,
            origin_pinned: false,
        }
    }

    pub fn zeros(level: u32) -> Self {
        Self {
            level,
            values: vec![0.0; grid_len(level)],
            origin_pinned: true,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_pinned(&self) -> bool {
        self.origin_pinned
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.values.len() - 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_cells() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Value of the piecewise-linear interpolant at `t ∈ [0, 1]`.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.n_cells();
        let pos = (t.clamp(0.0, 1.0) * n as f64).min(n as f64);
        let k = (pos.floor() as usize).min(n - 1);
        let frac = pos - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    /// Resample the piecewise-linear interpolant on a finer (or equal) grid.
    /// The result describes exactly the same continuous path.
    pub fn refine(&self, level: u32) -> Result<GridPath> {
        if level < self.level {
            return Err(Error::param(
                "level",
                format!("cannot refine level {} to coarser level {level}", self.level),
            ));
        }
        let ratio = 1usize << (level - self.level);
        let mut values = Vec::with_capacity(grid_len(level));
        for k in 0..self.n_cells() {
            let (a, b) = (self.values[k], self.values[k + 1]);
            for j in 0..ratio {
                values.push(a + (b - a) * (j as f64 / ratio as f64));
            }
        }
        values.push(self.last());
        Ok(GridPath {
            level,
            values,
            origin_pinned: self.origin_pinned,
        })
    }

    /// Pointwise image `t ↦ f(x_t)` on the same grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridPath {
        GridPath {
            level: self.level,
            values: self.values.iter().map(|&v| f(v)).collect(),
            origin_pinned: false,
        }
    }

    pub fn scaled(&self, c: f64) -> GridPath {
        GridPath {
            level: self.level,
            values: self.values.iter().map(|&v| c * v).collect(),
            origin_pinned: self.origin_pinned,
        }
    }

    /// `self + c * other` on a shared grid.
    pub fn add_scaled(&self, c: f64, other: &GridPath) -> Result<GridPath> {
        self.check_same_level(other)?;
        Ok(GridPath {
            level: self.level,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
            origin_pinned: self.origin_pinned && other.origin_pinned,
        })
    }

    pub(crate) fn check_same_level(&self, other: &GridPath) -> Result<()> {
        if self.level != other.level {
            return Err(Error::GridMismatch {
                expected: self.level,
                found: other.level,
            });
        }
        Ok(())
    }

    pub(crate) fn check_finite(&self, what: &'static str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { what, index }),
            None => Ok(()),
        }
    }

    /// Write `time,value` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.time(k), v)?;
        }
        Ok(())
    }
}

pub(crate) fn grid_len(level: u32) -> usize {
    (1usize << level) + 1
}

/// `R(s,t) = ½(s^{2H} + t^{2H} − |t−s|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, h: HurstParam) -> Result<f64> {
    if !(s >= 0.0 && t >= 0.0) {
        return Err(Error::param("time", format!("times must be nonnegative, got ({s}, {t})")));
    }
    Ok(covariance_unchecked(s, t, h.two_h()))
}

pub(crate) fn covariance_unchecked(s: f64, t: f64, two_h: f64) -> f64 {
    if s == 0.0 || t == 0.0 {
        return 0.0;
    }
    if s == t {
        return s.powf(two_h);
    }
    0.5 * (s.powf(two_h) + t.powf(two_h) - (t - s).abs().powf(two_h))
}

/// Covariance of unit-spaced fractional Gaussian noise at lag `k`.
pub(crate) fn fgn_autocovariance(k: usize, two_h: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).powf(two_h))
}

/// Anything that draws origin-pinned fBM paths on a fixed dyadic grid.
pub trait PathSampler: Sync {
    fn level(&self) -> u32;

    fn hurst(&self) -> HurstParam;

    /// Fill `out` (length `2^level + 1`) with one path.
    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]);

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GridPath {
        let mut values = vec![0.0; grid_len(self.level())];
        self.sample_into(rng, &mut values);
        GridPath {
            level: self.level(),
            values,
            origin_pinned: true,
        }
    }
}
