//! Dyadic piecewise-linear approximations of `∫₀¹ φ(x_t) dy_t` and a Monte
//! Carlo check of the conditional variance given `x`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbm::{grid_len, CirculantSampler, GridPath, HurstParam};
use crate::functionals::{PathSource, PhiSpec};
use crate::rng::SeedStream;
use crate::stats::{compensated_sum, Moments};

/// The level-`m` piecewise-linear interpolant of `x`, sampled back on `x`'s grid.
pub fn dyadic_interp(x: &GridPath, m: u32) -> Result<GridPath> {
    if m > x.level() {
        return Err(Error::param(
            "m",
            format!("interpolation level {m} exceeds path level {}", x.level()),
        ));
    }
    let coarse = x.grid(m)?;
    let mut out = coarse.refine(x.level())?;
    if x.is_pinned() {
        out = GridPath::pinned(out.level(), out.into_values())?;
    }
    Ok(out)
}

fn integrate_cells(knots: &[f64], dy: impl Iterator<Item = f64>, phi: &PhiSpec) -> f64 {
    let terms: Vec<f64> = knots
        .windows(2)
        .zip(dy)
        .map(|(w, d)| d * phi.segment_average(w[0], w[1]))
        .collect();
    compensated_sum(&terms)
}

/// `∫₀¹ φ(x^{(m)}_t) dy^{(m)}_t` with both paths interpolated at level `m`.
pub fn rs_integral(x: &GridPath, y: &GridPath, phi: &PhiSpec, m: u32) -> Result<f64> {
    x.check_same_level(y)?;
    if m > x.level() {
        return Err(Error::param("m", format!("level {m} exceeds path level {}", x.level())));
    }
    let xm = x.grid(m)?;
    let ym = y.grid(m)?;
    let dy = ym.values().windows(2).map(|w| w[1] - w[0]);
    Ok(integrate_cells(xm.values(), dy, phi))
}

/// `∫₀¹ φ(x^{(m)}_t) dy_t` with `x` interpolated at level `m` and `y` kept at its
/// own (finer or equal) level.
pub fn line_integral(x: &GridPath, y: &GridPath, phi: &PhiSpec, m: u32) -> Result<f64> {
    if m > x.level() || m > y.level() {
        return Err(Error::param(
            "m",
            format!("level {m} exceeds path levels ({}, {})", x.level(), y.level()),
        ));
    }
    let xm = x.grid(m)?.refine(y.level())?;
    let dy = y.values().windows(2).map(|w| w[1] - w[0]);
    Ok(integrate_cells(xm.values(), dy, phi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicLadder {
    pub base_level: u32,
    pub levels: Vec<u32>,
    pub integrals: Vec<f64>,
}

impl DyadicLadder {
    /// `|I_{m_{i+1}} − I_{m_i}|` for consecutive requested levels.
    pub fn diffs(&self) -> Vec<f64> {
        self.integrals.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
    }

    /// Rows `level,value,diff`; `diff` is empty on the first row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "level,value,diff")?;
        for (i, (level, value)) in self.levels.iter().zip(&self.integrals).enumerate() {
            if i == 0 {
                writeln!(w, "{level},{value},")?;
            } else {
                writeln!(w, "{level},{value},{}", (value - self.integrals[i - 1]).abs())?;
            }
        }
        Ok(())
    }
}

pub fn integral_ladder(x: &GridPath, y: &GridPath, phi: &PhiSpec, levels: &[u32]) -> Result<DyadicLadder> {
    if levels.is_empty() {
        return Err(Error::param("levels", "need at least one level"));
    }
    let integrals = levels
        .iter()
        .map(|&m| rs_integral(x, y, phi, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(DyadicLadder {
        base_level: x.level(),
        levels: levels.to_vec(),
        integrals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondVarEstimate {
    pub n: usize,
    pub mean: f64,
    pub mean_stderr: f64,
    pub second_moment: f64,
    /// Standard error of `second_moment`.
    pub stderr: f64,
    pub skewness: f64,
    pub skewness_stderr: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_stderr: f64,
}

impl CondVarEstimate {
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 samples, got {n}")));
        }
        let moments = Moments::of(values);
        let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
        let sq = Moments::of(&squares);
        let nf = n as f64;
        // large-sample standard errors of sample skewness and excess kurtosis
        let skew_se = (6.0 * nf * (nf - 1.0) / ((nf - 2.0) * (nf + 1.0) * (nf + 3.0))).sqrt();
        let kurt_se = 2.0 * skew_se * ((nf * nf - 1.0) / ((nf - 3.0) * (nf + 5.0))).sqrt();
        Ok(Self {
            n,
            mean: moments.mean,
            mean_stderr: moments.stderr(),
            second_moment: sq.mean,
            stderr: sq.stderr(),
            skewness: moments.skewness,
            skewness_stderr: skew_se,
            excess_kurtosis: moments.excess_kurtosis,
            kurtosis_stderr: kurt_se,
        })
    }

    pub fn normality_ok(&self, k_sigma: f64) -> bool {
        self.skewness.abs() <= k_sigma * self.skewness_stderr
            && self.excess_kurtosis.abs() <= k_sigma * self.kurtosis_stderr
    }
}

/// Sample `n_samples` independent fBM paths `Y` on the level-`y_level` grid and
/// report the law of `∫ φ(x^{(m)}) dY` given the fixed `x`.
pub fn conditional_variance_mc(
    x: &GridPath,
    phi: &PhiSpec,
    hurst: HurstParam,
    m: u32,
    y_level: u32,
    n_samples: usize,
    seeds: &SeedStream,
) -> Result<CondVarEstimate> {
    if n_samples < 1000 {
        return Err(Error::param("n_samples", format!("need at least 1000, got {n_samples}")));
    }
    if m > x.level() || m > y_level {
        return Err(Error::param("m", format!("level {m} exceeds path levels")));
    }
    x.check_finite("x")?;
    let sampler = CirculantSampler::new(y_level, hurst)?;
    let knots = x.grid(m)?.refine(y_level)?;
    let avg: Vec<f64> = knots
        .values()
        .windows(2)
        .map(|w| phi.segment_average(w[0], w[1]))
        .collect();
    let len = grid_len(y_level);
    let n_pairs = n_samples.div_ceil(2);
    let pairs: Vec<[f64; 2]> = (0..n_pairs)
        .into_par_iter()
        .map_init(
            || (vec![0.0; len], vec![0.0; len]),
            |(a, b), i| {
                let mut rng = seeds.rng(i as u64);
                sampler.sample_pair(&mut rng, a, b);
                [dot_increments(&avg, a), dot_increments(&avg, b)]
            },
        )
        .collect();
    let values: Vec<f64> = pairs.into_iter().flatten().take(n_samples).collect();
    CondVarEstimate::from_samples(&values)
}

fn dot_increments(avg: &[f64], y: &[f64]) -> f64 {
    let terms: Vec<f64> = avg.iter().zip(y.windows(2)).map(|(a, w)| a * (w[1] - w[0])).collect();
    compensated_sum(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{GaussianGridModel, PathSampler};

    #[test]
    fn interp_basics() {
        let x = GridPath::from_fn(5, |t| (7.0 * t).sin());
        assert_eq!(dyadic_interp(&x, 5).unwrap(), x);
        let chord = dyadic_interp(&x, 0).unwrap();
        for (k, v) in chord.values().iter().enumerate() {
            let want = x.first() + (x.last() - x.first()) * chord.time(k);
            assert!((v - want).abs() < 1e-15);
        }
        let once = dyadic_interp(&x, 3).unwrap();
        assert_eq!(dyadic_interp(&once, 3).unwrap(), once);
        assert!(dyadic_interp(&x, 6).is_err());
    }

    #[test]
    fn trivial_integrands() {
        let model = GaussianGridModel::build(6, HurstParam::new(0.35).unwrap()).unwrap();
        let mut rng = SeedStream::new(2).rng(0);
        let x = model.sample(&mut rng);
        let y = model.sample(&mut rng);
        let inc = y.last() - y.first();
        assert!((rs_integral(&x, &y, &PhiSpec::constant(1.0), 4).unwrap() - inc).abs() < 1e-14);
        let flat = GridPath::from_fn(6, |_| std::f64::consts::FRAC_PI_2);
        assert!((rs_integral(&flat, &y, &PhiSpec::sin(), 6).unwrap() - inc).abs() < 1e-14);
        let id = PhiSpec::identity_for_tests();
        for m in 0..=6 {
            let got = rs_integral(&x, &x, &id, m).unwrap();
            assert!((got - 0.5 * (x.last().powi(2) - x.first().powi(2))).abs() < 1e-13);
        }
        let lin = GridPath::from_fn(6, |t| t);
        let ladder = integral_ladder(&lin, &lin, &id, &[1, 3, 5]).unwrap();
        assert!(ladder.integrals.iter().all(|v| (v - 0.5).abs() < 1e-15));
        let c = integral_ladder(&x, &y, &PhiSpec::constant(2.0), &[2, 4, 6]).unwrap();
        assert!(c.integrals.iter().all(|v| (v - 2.0 * inc).abs() < 1e-13));
    }

    #[test]
    fn linear_and_antisymmetric_in_y() {
        let model = GaussianGridModel::build(5, HurstParam::new(0.4).unwrap()).unwrap();
        let mut rng = SeedStream::new(8).rng(0);
        let (x, y1, y2) = (model.sample(&mut rng), model.sample(&mut rng), model.sample(&mut rng));
        let phi = PhiSpec::sin();
        let combo = y1.scaled(2.0).add_scaled(-0.5, &y2).unwrap();
        let lhs = rs_integral(&x, &combo, &phi, 5).unwrap();
        let rhs = 2.0 * rs_integral(&x, &y1, &phi, 5).unwrap() - 0.5 * rs_integral(&x, &y2, &phi, 5).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        let neg = rs_integral(&x, &y1.scaled(-1.0), &phi, 5).unwrap();
        assert_eq!(neg, -rs_integral(&x, &y1, &phi, 5).unwrap());
    }

    #[test]
    fn line_integral_reduces_to_rs_on_shared_grid() {
        let model = GaussianGridModel::build(6, HurstParam::new(0.35).unwrap()).unwrap();
        let mut rng = SeedStream::new(9).rng(0);
        let (x, y) = (model.sample(&mut rng), model.sample(&mut rng));
        let phi = PhiSpec::sin();
        let a = line_integral(&x, &dyadic_interp(&y, 4).unwrap(), &phi, 4).unwrap();
        let b = rs_integral(&x, &y, &phi, 4).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn constant_phi_has_unit_second_moment() {
        let x = GridPath::zeros(4);
        let est = conditional_variance_mc(
            &x,
            &PhiSpec::constant(1.0),
            HurstParam::new(0.35).unwrap(),
            4,
            6,
            20_000,
            &SeedStream::new(4),
        )
        .unwrap();
        assert!((est.second_moment - 1.0).abs() < 4.0 * est.stderr, "{est:?}");
        assert!(est.mean.abs() < 4.0 * est.mean_stderr);
        assert!(est.normality_ok(5.0));
    }

    #[test]
    fn ladder_csv() {
        let lin = GridPath::from_fn(3, |t| t);
        let l = integral_ladder(&lin, &lin, &PhiSpec::constant(1.0), &[1, 2]).unwrap();
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "level,value,diff\n1,1,\n2,1,0\n");
    }

    #[test]
    fn ladder_differences_decay() {
        let h = HurstParam::new(0.4).unwrap();
        let model = GaussianGridModel::build(10, h).unwrap();
        let seeds = SeedStream::new(12);
        let levels: Vec<u32> = (4..=10).collect();
        let mut mean_diff = vec![0.0; levels.len() - 1];
        for i in 0..50 {
            let mut rng = seeds.rng(i);
            let (x, y) = (model.sample(&mut rng), model.sample(&mut rng));
            let l = integral_ladder(&x, &y, &PhiSpec::sin(), &levels).unwrap();
            for (acc, d) in mean_diff.iter_mut().zip(l.diffs()) {
                *acc += d.abs() / 50.0;
            }
        }
        let last_two = mean_diff[mean_diff.len() - 2].max(mean_diff[mean_diff.len() - 1]);
        assert!(last_two < mean_diff[0], "{mean_diff:?}");
    }
}
