use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{fgn_autocovariance, grid_len, GridPath, HurstParam, PathSampler};
use crate::error::{Error, Result};

/// Circulant-embedding sampler of fBM increments (Davies–Harte).
///
/// One FFT of size `2^{level+1}` yields two independent paths.
#[derive(Clone)]
pub struct CirculantSampler {
    level: u32,
    hurst: HurstParam,
    sqrt_eig: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler")
            .field("level", &self.level)
            .field("hurst", &self.hurst)
            .finish()
    }
}

impl CirculantSampler {
    pub fn new(level: u32, hurst: HurstParam) -> Result<Self> {
        if level > 24 {
            return Err(Error::param("level", format!("level {level} too large")));
        }
        let n = 1usize << level;
        let m = 2 * n;
        let two_h = hurst.two_h();
        let mut row: Vec<Complex64> = (0..m)
            .map(|k| {
                let lag = if k <= n { k } else { m - k };
                Complex64::new(fgn_autocovariance(lag, two_h), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut row);
        let max_eig = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        let mut sqrt_eig = Vec::with_capacity(m);
        for (k, c) in row.iter().enumerate() {
            let lam = c.re;
            if lam < -1e-10 * max_eig {
                return Err(Error::NotPositiveDefinite { pivot: k, value: lam });
            }
            sqrt_eig.push((lam.max(0.0) / m as f64).sqrt());
        }
        Ok(Self {
            level,
            hurst,
            sqrt_eig,
            fft,
        })
    }

    /// Two independent paths from one transform.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R, a: &mut [f64], b: &mut [f64]) {
        let n = 1usize << self.level;
        let mut buf: Vec<Complex64> = self
            .sqrt_eig
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        let scale = (1.0 / n as f64).powf(self.hurst.value());
        a[0] = 0.0;
        b[0] = 0.0;
        for k in 0..n {
            a[k + 1] = a[k] + scale * buf[k].re;
            b[k + 1] = b[k] + scale * buf[k].im;
        }
    }

    pub fn sample_pair_paths<R: Rng + ?Sized>(&self, rng: &mut R) -> (GridPath, GridPath) {
        let len = grid_len(self.level);
        let (mut a, mut b) = (vec![0.0; len], vec![0.0; len]);
        self.sample_pair(rng, &mut a, &mut b);
        (
            GridPath::pinned(self.level, a).expect("pinned by construction"),
            GridPath::pinned(self.level, b).expect("pinned by construction"),
        )
    }
}

impl PathSampler for CirculantSampler {
    fn level(&self) -> u32 {
        self.level
    }

    fn hurst(&self) -> HurstParam {
        self.hurst
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let mut spare = vec![0.0; out.len()];
        self.sample_pair(rng, out, &mut spare);
    }
}
