use rand::Rng;
use rand_distr::StandardNormal;

use super::{covariance_unchecked, grid_len, GridPath, HurstParam, PathSampler};
use crate::error::{Error, Result};

/// Discrete fBM law on the dyadic times `k / 2^level`, `k = 1..=2^level`.
///
/// The origin carries no randomness and is left out of the covariance.
#[derive(Debug, Clone)]
pub struct GaussianGridModel {
    level: u32,
    hurst: HurstParam,
    grid_times: Vec<f64>,
    covariance: Vec<f64>,
    // lower triangle, row-major packed: row i starts at i(i+1)/2
    factor: Vec<f64>,
    jitter: Option<f64>,
}

impl GaussianGridModel {
    pub fn build(level: u32, hurst: HurstParam) -> Result<Self> {
        if level > 13 {
            return Err(Error::param(
                "level",
                format!("dense covariance at level {level} is too large (max 13)"),
            ));
        }
        let n = 1usize << level;
        let dt = 1.0 / n as f64;
        let grid_times: Vec<f64> = (1..=n).map(|k| k as f64 * dt).collect();
        let two_h = hurst.two_h();
        let mut covariance = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let r = covariance_unchecked(grid_times[i], grid_times[j], two_h);
                covariance[i * n + j] = r;
                covariance[j * n + i] = r;
            }
        }
        let (factor, jitter) = match cholesky_packed(&covariance, n, 0.0) {
            Ok(f) => (f, None),
            Err(_) => {
                let max_diag = (0..n).map(|i| covariance[i * n + i]).fold(0.0, f64::max);
                let eps = 1e-12 * max_diag;
                (cholesky_packed(&covariance, n, eps)?, Some(eps))
            }
        };
        Ok(Self {
            level,
            hurst,
            grid_times,
            covariance,
            factor,
            jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid_times.len()
    }

    pub fn grid_times(&self) -> &[f64] {
        &self.grid_times
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.dim() + j]
    }

    pub fn factor(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.factor[i * (i + 1) / 2 + j]
        }
    }

    /// Diagonal jitter that was needed to complete the factorization, if any.
    pub fn jitter_applied(&self) -> Option<f64> {
        self.jitter
    }

    /// `max |L Lᵀ − Σ|` over all entries.
    pub fn reconstruction_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            let ri = &self.factor[i * (i + 1) / 2..][..i + 1];
            for j in 0..=i {
                let rj = &self.factor[j * (j + 1) / 2..][..j + 1];
                let s: f64 = ri[..=j].iter().zip(rj).map(|(a, b)| a * b).sum();
                worst = worst.max((s - self.covariance[i * n + j]).abs());
            }
        }
        worst
    }

    /// Map standard normals `z` (length `dim`) to a path `L z` with a pinned origin.
    pub fn sample_from_normals(&self, z: &[f64]) -> Result<GridPath> {
        if z.len() != self.dim() {
            return Err(Error::param(
                "z",
                format!("expected {} normals, got {}", self.dim(), z.len()),
            ));
        }
        let mut out = vec![0.0; grid_len(self.level)];
        self.apply_factor(z, &mut out[1..]);
        GridPath::pinned(self.level, out)
    }

    fn apply_factor(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.factor[i * (i + 1) / 2..][..i + 1];
            *o = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }

    /// Solve `L y = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let row = &self.factor[i * (i + 1) / 2..][..i + 1];
            let s: f64 = row[..i].iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (b[i] - s) / row[i];
        }
        y
    }

    fn whiten(&self, path: &GridPath) -> Result<Vec<f64>> {
        if path.level() != self.level {
            return Err(Error::GridMismatch {
                expected: self.level,
                found: path.level(),
            });
        }
        Ok(self.forward_solve(&path.values()[1..]))
    }

    /// `log dN(0,Σ)/dN(shift,Σ)` evaluated at `x`.
    pub fn shift_log_density_ratio(&self, x: &GridPath, shift: &GridPath) -> Result<f64> {
        let a = self.whiten(shift)?;
        let b = self.whiten(x)?;
        let cross: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
        let quad: f64 = a.iter().map(|u| u * u).sum();
        Ok(-cross + 0.5 * quad)
    }

    /// `⟨shift, Σ⁻¹ shift⟩`.
    pub fn cm_quadratic_form(&self, shift: &GridPath) -> Result<f64> {
        let a = self.whiten(shift)?;
        Ok(a.iter().map(|u| u * u).sum())
    }

    /// `L⁻¹ shift`, so that for `x = shift + L z` the log ratio is `−w·z − ½|w|²`.
    pub fn whitened_shift(&self, shift: &GridPath) -> Result<Vec<f64>> {
        self.whiten(shift)
    }
}

impl PathSampler for GaussianGridModel {
    fn level(&self) -> u32 {
        self.level
    }

    fn hurst(&self) -> HurstParam {
        self.hurst
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        out[0] = 0.0;
        self.apply_factor(&z, &mut out[1..]);
    }
}

fn cholesky_packed(a: &[f64], n: usize, jitter: f64) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * (n + 1) / 2];
    for i in 0..n {
        let ri = i * (i + 1) / 2;
        for j in 0..=i {
            let rj = j * (j + 1) / 2;
            let s: f64 = (0..j).map(|k| l[ri + k] * l[rj + k]).sum();
            if i == j {
                let d = a[i * n + i] + jitter - s;
                if !(d > 0.0) {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: d });
                }
                l[ri + i] = d.sqrt();
            } else {
                l[ri + j] = (a[i * n + j] - s) / l[rj + j];
            }
        }
    }
    Ok(l)
}
