//! Experiment driver: JSON configuration, subcommands and CSV/JSON artifacts.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fbm::{CirculantSampler, GaussianGridModel, GridPath, HurstParam, PathSampler};
use crate::functionals::{i_functional, PhiSpec, QuadratureConfig};
use crate::rng::SeedStream;
use crate::roughint::conditional_variance_mc;
use crate::tail::{
    main_theorem_experiment, scaling_sweep, smallball_probe, MainExperimentConfig, MainReport,
    SmallBallResult, SweepResult,
};
use crate::weierstrass::{compute_rho, WeierstrassParams};

/// Default output directory when neither the flag nor the config sets one.
pub const OUTPUT_DIR_ENV: &str = "ROUGHTAIL_OUTPUT_DIR";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SampleFbm,
    CondVar,
    ScalingSweep,
    Tail,
    SmallBall,
    FullReport,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SampleFbm => "sample-fbm",
            Command::CondVar => "cond-var",
            Command::ScalingSweep => "scaling-sweep",
            Command::Tail => "tail",
            Command::SmallBall => "small-ball",
            Command::FullReport => "full-report",
        }
    }

    fn needs_main_regime(self) -> bool {
        !matches!(self, Command::SampleFbm)
    }

    fn needs_alpha(self) -> bool {
        matches!(self, Command::ScalingSweep | Command::Tail | Command::FullReport)
    }

    fn uses(self, other: Command) -> bool {
        self == other || self == Command::FullReport
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiName {
    Sin,
    Const,
}

/// `sin(omega·x + phase)` or the constant `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiConfig {
    pub kind: PhiName,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "one")]
    pub c: f64,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self {
            kind: PhiName::Sin,
            omega: 1.0,
            phase: 0.0,
            c: 1.0,
        }
    }
}

impl PhiConfig {
    pub fn build(&self) -> Result<PhiSpec> {
        match self.kind {
            PhiName::Sin => PhiSpec::sine(self.omega, self.phase),
            PhiName::Const => {
                if !self.c.is_finite() {
                    return Err(Error::Config(format!("phi.c must be finite, got {}", self.c)));
                }
                Ok(PhiSpec::constant(self.c))
            }
        }
    }
}

fn one() -> f64 {
    1.0
}
fn d_grid_level() -> u32 {
    10
}
fn d_n_samples() -> usize {
    100_000
}
fn d_lambda_grid() -> Vec<f64> {
    (2..=12).map(f64::from).collect()
}
fn d_n_paths() -> usize {
    5
}
fn d_sweep_lambdas() -> Vec<f64> {
    (1..=10).map(|k| f64::from(k).exp2()).collect()
}
fn d_sweep_quad_levels() -> Vec<u32> {
    vec![15, 16]
}
fn d_i_lambda_grid() -> Vec<f64> {
    vec![0.6, 0.7, 0.8, 0.9, 1.0]
}
fn d_tilt_nats() -> Vec<f64> {
    vec![0.0, 0.25, 1.0, 4.0, 16.0, 64.0]
}
fn d_fit_drop() -> f64 {
    0.25
}
fn d_r() -> f64 {
    std::f64::consts::PI
}
fn d_delta() -> f64 {
    0.1
}
fn d_small_ball_xs() -> Vec<f64> {
    vec![1.0, 0.8, 0.6, 0.5]
}
fn d_small_ball_level() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "H")]
    pub h: f64,
    pub alpha: f64,
    #[serde(default)]
    pub phi: PhiConfig,
    #[serde(default = "d_grid_level")]
    pub grid_level: u32,
    #[serde(default = "d_n_samples")]
    pub n_samples: usize,
    #[serde(default = "d_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Fixed `X` paths in `cond-var` and paths written by `sample-fbm`.
    #[serde(default = "d_n_paths")]
    pub n_paths: usize,
    /// Level of the `Y` grid in `cond-var`; defaults to `grid_level + 2`.
    #[serde(default)]
    pub y_level: Option<u32>,
    #[serde(default = "d_sweep_lambdas")]
    pub sweep_lambdas: Vec<f64>,
    #[serde(default = "d_sweep_quad_levels")]
    pub sweep_quad_levels: Vec<u32>,
    #[serde(default = "d_i_lambda_grid")]
    pub i_lambda_grid: Vec<f64>,
    #[serde(default = "d_tilt_nats")]
    pub tilt_nats: Vec<f64>,
    #[serde(default = "d_fit_drop")]
    pub fit_drop: f64,
    /// Window length of the non-degeneracy constant `ρ`.
    #[serde(default = "d_r")]
    pub r: f64,
    #[serde(default = "one")]
    pub c2: f64,
    #[serde(default = "one")]
    pub c4: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_small_ball_xs")]
    pub small_ball_xs: Vec<f64>,
    #[serde(default = "d_small_ball_level")]
    pub small_ball_level: u32,
}

/// Parse a strict JSON document: unknown or duplicate keys are errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

fn bad(msg: String) -> Result<()> {
    Err(Error::Config(msg))
}

fn increasing_positive(name: &str, v: &[f64], min_len: usize) -> Result<()> {
    if v.len() < min_len {
        return bad(format!("{name} needs at least {min_len} entries, got {}", v.len()));
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) || v.windows(2).any(|w| w[1] <= w[0]) {
        return bad(format!("{name} must be positive and strictly increasing"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn y_level(&self) -> u32 {
        self.y_level.unwrap_or(self.grid_level + 2)
    }

    pub fn hurst(&self) -> Result<HurstParam> {
        HurstParam::new(self.h)
    }

    /// Check every constraint `cmd` depends on; the first failure is returned.
    pub fn validate(&self, cmd: Command) -> Result<()> {
        let c = cmd.name();
        if !(self.h > 0.0 && self.h < 1.0) {
            return bad(format!("H must lie in (0, 1), got {}", self.h));
        }
        if cmd.needs_main_regime() && !(self.h > 0.25 && self.h < 0.5) {
            return bad(format!("H = {} must lie in the main regime (1/4, 1/2) for {c}", self.h));
        }
        if cmd.needs_alpha() {
            if !(self.alpha > 0.0 && self.alpha < 1.0) {
                return bad(format!("alpha must lie in (0, 1) for {c}, got {}", self.alpha));
            }
            if self.alpha <= self.h + 0.5 {
                return bad(format!("alpha must exceed H + 1/2 for {c} (alpha = {}, H = {})", self.alpha, self.h));
            }
        }
        self.phi.build().map_err(|e| Error::Config(format!("phi: {e}")))?;
        let max_level = if cmd == Command::SampleFbm { 20 } else { 13 };
        if self.grid_level > max_level {
            return bad(format!("grid_level must be at most {max_level} for {c}, got {}", self.grid_level));
        }
        if cmd != Command::SampleFbm && self.grid_level < 2 {
            return bad(format!("grid_level must be at least 2 for {c}"));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be positive".into());
        }
        let sampling = matches!(cmd, Command::CondVar | Command::Tail | Command::SmallBall | Command::FullReport);
        if sampling && self.n_samples < 1000 {
            return bad(format!("n_samples must be at least 1000 for {c}, got {}", self.n_samples));
        }
        if cmd.uses(Command::CondVar) && !(self.y_level() >= self.grid_level && self.y_level() <= 20) {
            return bad(format!("y_level must lie in [grid_level, 20], got {}", self.y_level()));
        }
        if cmd.uses(Command::ScalingSweep) || cmd == Command::Tail {
            increasing_positive("sweep_lambdas", &self.sweep_lambdas, 2)?;
            if self.sweep_lambdas[0] <= 1.0 {
                return bad("sweep_lambdas must exceed 1".into());
            }
            QuadratureConfig::levels(&self.sweep_quad_levels).map_err(|e| Error::Config(format!("sweep_quad_levels: {e}")))?;
            if !(self.r > 0.0 && self.r.is_finite()) {
                return bad(format!("r must be positive, got {}", self.r));
            }
        }
        if cmd.uses(Command::ScalingSweep) || cmd == Command::Tail {
            if !(0.0..1.0).contains(&self.fit_drop) {
                return bad(format!("fit_drop must lie in [0, 1), got {}", self.fit_drop));
            }
        }
        if cmd.uses(Command::Tail) {
            increasing_positive("lambda_grid", &self.lambda_grid, 4)?;
            if !self.i_lambda_grid.is_empty() {
                increasing_positive("i_lambda_grid", &self.i_lambda_grid, 1)?;
            }
            if self.tilt_nats.is_empty() || self.tilt_nats.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("tilt_nats must be a non-empty list of non-negative costs".into());
            }
            if !(self.c2 > 0.0 && self.c4 > 0.0) {
                return bad(format!("c2 and c4 must be positive, got ({}, {})", self.c2, self.c4));
            }
        }
        if cmd.uses(Command::SmallBall) {
            if !(self.delta > 0.0 && self.delta < self.h) {
                return bad(format!("delta must lie in (0, H), got {}", self.delta));
            }
            if self.small_ball_xs.is_empty() || self.small_ball_xs.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
                return bad("small_ball_xs must be a non-empty list in (0, 1]".into());
            }
            if !(1..=13).contains(&self.small_ball_level) {
                return bad(format!("small_ball_level must lie in [1, 13], got {}", self.small_ball_level));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the resolved config (output directory excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn provenance(&self) -> Value {
        let mut echoed = self.clone();
        echoed.output_dir = None;
        json!({
            "seed": self.seed,
            "version": VERSION,
            "config_sha256": self.hash(),
            "config": echoed,
        })
    }

    fn csv_header(&self) -> String {
        format!("# roughtail {VERSION} seed={} config_sha256={}\n", self.seed, self.hash())
    }
}

/// Pass/fail tolerances applied by [`emit_report`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    /// `|m̂₂ − I| ≤ k·stderr + quad_err`.
    pub cond_var_k: f64,
    pub normality_k: f64,
    /// Relative band around `(1 − 2H)/α` for the windowed sweep slope.
    pub slope_rel: f64,
    /// Required `(2 − γ̂)/stderr` for non-constant `φ`.
    pub gamma_margin_k: f64,
    /// `|γ̂ − 2|` allowed for constant `φ`.
    pub gaussian_gamma_tol: f64,
    /// Reported only: `γ̂ > 1 + 2H − soft_gamma_slack`.
    pub soft_gamma_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cond_var_k: 4.0,
            normality_k: 5.0,
            slope_rel: 0.15,
            gamma_margin_k: 3.0,
            gaussian_gamma_tol: 0.1,
            soft_gamma_slack: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondVarRow {
    pub path: usize,
    pub m: u32,
    pub mc_second_moment: f64,
    pub stderr: f64,
    pub i_functional: f64,
    pub quad_err: f64,
    pub skewness_z: f64,
    pub kurtosis_z: f64,
}

impl CondVarRow {
    pub fn zscore(&self) -> f64 {
        (self.mc_second_moment - self.i_functional) / self.stderr
    }
}

/// Raw outcome of one experiment; pass flags are computed in [`emit_report`].
#[derive(Debug, Clone)]
pub enum ExperimentResult {
    SampleFbm { n_paths: usize, level: u32 },
    CondVar(Vec<CondVarRow>),
    Sweep(SweepResult),
    Tail { report: Box<MainReport>, constant_phi: bool },
    SmallBall(SmallBallResult),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Reported without affecting `all_pass`.
    pub gated: bool,
}

fn check(name: &str, value: f64, threshold: f64, pass: bool) -> Check {
    Check {
        name: name.into(),
        value,
        threshold,
        pass,
        gated: true,
    }
}

fn opt(v: Option<f64>) -> Value {
    v.filter(|x| x.is_finite()).map_or(Value::Null, Value::from)
}

/// Collate results into one summary with pass/fail flags.
pub fn emit_report(results: &[ExperimentResult], tol: &Tolerances) -> Result<Value> {
    if results.is_empty() {
        return Err(Error::InsufficientData("no completed experiments to report".into()));
    }
    let mut out = serde_json::Map::new();
    let mut checks = Vec::new();
    for r in results {
        match r {
            ExperimentResult::SampleFbm { n_paths, level } => {
                out.insert("sample_fbm".into(), json!({ "n_paths": n_paths, "grid_level": level }));
            }
            ExperimentResult::CondVar(rows) => {
                let worst = rows.iter().map(|r| r.zscore().abs()).fold(0.0, f64::max);
                out.insert("cond_var_zscore".into(), json!(worst));
                out.insert("cond_var".into(), json!(rows));
                for r in rows {
                    let diff = (r.mc_second_moment - r.i_functional).abs();
                    let limit = tol.cond_var_k * r.stderr + r.quad_err;
                    checks.push(check(&format!("cond_var_path{}", r.path), diff, limit, diff <= limit));
                    let z = r.skewness_z.abs().max(r.kurtosis_z.abs());
                    checks.push(check(&format!("normality_path{}", r.path), z, tol.normality_k, z <= tol.normality_k));
                }
            }
            ExperimentResult::Sweep(s) => {
                out.insert("slope_scaling".into(), opt(s.slope_window));
                out.insert(
                    "scaling_sweep".into(),
                    json!({
                        "slope": opt(s.slope_window),
                        "slope_full": opt(s.slope_full),
                        "target": s.target,
                        "rho": s.rho,
                    }),
                );
                let rel = s.slope_window.map_or(f64::INFINITY, |v| (v / s.target - 1.0).abs());
                checks.push(check("scaling_slope_rel", rel, tol.slope_rel, rel <= tol.slope_rel));
            }
            ExperimentResult::Tail { report, constant_phi } => {
                let s = report.summary();
                out.insert("gamma_hat".into(), json!(s.gamma_hat));
                out.insert("tail".into(), json!({ "summary": s, "fit": report.fit }));
                if *constant_phi {
                    let dev = (s.gamma_hat - 2.0).abs();
                    checks.push(check("gaussian_gamma", dev, tol.gaussian_gamma_tol, dev <= tol.gaussian_gamma_tol));
                } else {
                    let margin = (2.0 - s.gamma_hat) / s.gamma_stderr;
                    checks.push(check("gamma_below_two_margin", margin, tol.gamma_margin_k, margin >= tol.gamma_margin_k));
                    let floor = 1.0 + 2.0 * s.h - tol.soft_gamma_slack;
                    let mut soft = check("gamma_soft_floor", s.gamma_hat, floor, s.gamma_hat > floor);
                    soft.gated = false;
                    checks.push(soft);
                }
            }
            ExperimentResult::SmallBall(sb) => {
                out.insert(
                    "small_ball".into(),
                    json!({
                        "rows": sb.rows,
                        "c_hat": opt(sb.c_hat),
                        "c_first_half": opt(sb.c_first_half),
                        "c_second_half": opt(sb.c_second_half),
                        "split_change": opt(sb.split_change()),
                        "all_resolved": sb.all_resolved,
                    }),
                );
                let c = sb.c_hat.unwrap_or(f64::NAN);
                checks.push(check("small_ball_c_positive", c, 0.0, c > 0.0));
                if let Some(change) = sb.split_change() {
                    let mut stab = check("small_ball_split_stability", change, 0.3, change <= 0.3);
                    stab.gated = false;
                    checks.push(stab);
                }
            }
        }
    }
    let all_pass = checks.iter().filter(|c| c.gated).all(|c| c.pass);
    out.insert("checks".into(), json!(checks));
    out.insert("tolerances".into(), json!(tol));
    out.insert("all_pass".into(), json!(all_pass));
    Ok(Value::Object(out))
}

/// Artifacts written by one run and the collated summary.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub artifacts: Vec<PathBuf>,
    pub summary: Value,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, v).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    dir: &'a Path,
    seeds: SeedStream,
    artifacts: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn csv(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = create(&path)?;
        w.write_all(self.cfg.csv_header().as_bytes())?;
        body(&mut w)?;
        w.flush()?;
        self.artifacts.push(path);
        Ok(())
    }
}

fn run_sample_fbm(ctx: &mut Ctx) -> Result<ExperimentResult> {
    let cfg = ctx.cfg;
    let h = cfg.hurst()?;
    let seeds = ctx.seeds.fork("sample-fbm");
    let paths: Vec<GridPath> = if cfg.grid_level <= 12 {
        let model = GaussianGridModel::build(cfg.grid_level, h)?;
        (0..cfg.n_paths).map(|i| model.sample(&mut seeds.rng(i as u64))).collect()
    } else {
        let sampler = CirculantSampler::new(cfg.grid_level, h)?;
        (0..cfg.n_paths).map(|i| sampler.sample(&mut seeds.rng(i as u64))).collect()
    };
    ctx.csv("sample_fbm.csv", |w| {
        writeln!(w, "path,time,value")?;
        for (i, p) in paths.iter().enumerate() {
            for (k, v) in p.values().iter().enumerate() {
                writeln!(w, "{i},{},{v:e}", p.time(k))?;
            }
        }
        Ok(())
    })?;
    Ok(ExperimentResult::SampleFbm {
        n_paths: cfg.n_paths,
        level: cfg.grid_level,
    })
}

fn run_cond_var(ctx: &mut Ctx) -> Result<ExperimentResult> {
    let cfg = ctx.cfg;
    let h = cfg.hurst()?.require_main_regime()?;
    let phi = cfg.phi.build()?;
    let m = cfg.grid_level;
    let y_level = cfg.y_level();
    let model = GaussianGridModel::build(m, h)?;
    let seeds = ctx.seeds.fork("cond-var");
    let x_seeds = seeds.fork("x");
    let q = QuadratureConfig::levels(&[y_level, y_level + 1, y_level + 2])?;
    let mut rows = Vec::new();
    for k in 0..cfg.n_paths {
        let x = model.sample(&mut x_seeds.rng(k as u64));
        let est = conditional_variance_mc(&x, &phi, h, m, y_level, cfg.n_samples, &seeds.fork(&format!("y{k}")))?;
        let i = i_functional(&x, &phi, h, &q)?;
        rows.push(CondVarRow {
            path: k,
            m,
            mc_second_moment: est.second_moment,
            stderr: est.stderr,
            i_functional: i.value,
            quad_err: i.error,
            skewness_z: est.skewness / est.skewness_stderr,
            kurtosis_z: est.excess_kurtosis / est.kurtosis_stderr,
        });
    }
    ctx.csv("cond_var.csv", |w| {
        writeln!(w, "path,m,mc_second_moment,stderr,i_functional,quad_err,zscore,skewness_z,kurtosis_z")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e},{},{},{}",
                r.path,
                r.m,
                r.mc_second_moment,
                r.stderr,
                r.i_functional,
                r.quad_err,
                r.zscore(),
                r.skewness_z,
                r.kurtosis_z
            )?;
        }
        Ok(())
    })?;
    Ok(ExperimentResult::CondVar(rows))
}

fn rho_for(cfg: &ExperimentConfig, p: &WeierstrassParams) -> Result<f64> {
    Ok(compute_rho(p, cfg.r, 8)?.rho)
}

fn run_sweep(ctx: &mut Ctx) -> Result<ExperimentResult> {
    let cfg = ctx.cfg;
    let h = cfg.hurst()?;
    let p = WeierstrassParams::new(cfg.alpha)?;
    let rho = rho_for(cfg, &p)?;
    let q = QuadratureConfig::levels(&cfg.sweep_quad_levels)?;
    let sweep = scaling_sweep(&p, rho, &cfg.phi.build()?, h, &cfg.sweep_lambdas, &q, cfg.fit_drop)?;
    ctx.csv("scaling_sweep.csv", |w| {
        writeln!(w, "lambda,J,quad_err,slope_window_fit")?;
        for r in &sweep.rows {
            let fit = sweep.window_fit_at(r.lambda).map_or(String::from("nan"), |v| format!("{v:e}"));
            writeln!(w, "{},{:e},{:e},{fit}", r.lambda, r.j, r.j_err)?;
        }
        Ok(())
    })?;
    Ok(ExperimentResult::Sweep(sweep))
}

/// Library configuration of the tail pipeline for this experiment config.
pub fn main_config(cfg: &ExperimentConfig) -> Result<MainExperimentConfig> {
    let p = WeierstrassParams::new(cfg.alpha)?;
    let phi = cfg.phi.build()?;
    let constant = phi.is_constant();
    Ok(MainExperimentConfig {
        hurst: cfg.hurst()?,
        alpha: cfg.alpha,
        phi,
        path_level: cfg.grid_level,
        quad_level: cfg.grid_level,
        n_samples: cfg.n_samples,
        lambda_grid: cfg.lambda_grid.clone(),
        i_lambda_grid: cfg.i_lambda_grid.clone(),
        tilt_nats: cfg.tilt_nats.clone(),
        // J ≡ 0 for constant φ, so the growth sweep carries no information
        sweep_lambdas: if constant { Vec::new() } else { cfg.sweep_lambdas.clone() },
        sweep_quad: QuadratureConfig::levels(&cfg.sweep_quad_levels)?,
        rho: rho_for(cfg, &p)?,
        fit_drop: cfg.fit_drop,
        c2: cfg.c2,
        c4: cfg.c4,
        seed: cfg.seed,
    })
}

fn run_tail(ctx: &mut Ctx) -> Result<ExperimentResult> {
    let mc = main_config(ctx.cfg)?;
    let constant_phi = mc.phi.is_constant();
    let report = main_theorem_experiment(&mc)?;
    ctx.csv("tail.csv", |w| report.write_csv(w))?;
    Ok(ExperimentResult::Tail {
        report: Box::new(report),
        constant_phi,
    })
}

fn run_small_ball(ctx: &mut Ctx) -> Result<ExperimentResult> {
    let cfg = ctx.cfg;
    let model = GaussianGridModel::build(cfg.small_ball_level, cfg.hurst()?)?;
    let sb = smallball_probe(&model, cfg.delta, &cfg.small_ball_xs, cfg.n_samples, &ctx.seeds.fork("small-ball"))?;
    ctx.csv("small_ball.csv", |w| {
        writeln!(w, "x,p_hat,stderr")?;
        for r in &sb.rows {
            writeln!(w, "{},{:e},{:e}", r.x, r.p_hat, r.stderr)?;
        }
        Ok(())
    })?;
    Ok(ExperimentResult::SmallBall(sb))
}

/// Run one subcommand, writing its CSV artifacts and a JSON summary into `dir`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput> {
    cfg.validate(cmd)?;
    fs::create_dir_all(dir)?;
    let mut ctx = Ctx {
        cfg,
        dir,
        seeds: SeedStream::new(cfg.seed),
        artifacts: Vec::new(),
    };
    let results = match cmd {
        Command::SampleFbm => vec![run_sample_fbm(&mut ctx)?],
        Command::CondVar => vec![run_cond_var(&mut ctx)?],
        Command::ScalingSweep => vec![run_sweep(&mut ctx)?],
        Command::Tail => vec![run_tail(&mut ctx)?],
        Command::SmallBall => vec![run_small_ball(&mut ctx)?],
        Command::FullReport => vec![
            run_cond_var(&mut ctx)?,
            run_sweep(&mut ctx)?,
            run_tail(&mut ctx)?,
            run_small_ball(&mut ctx)?,
        ],
    };
    let mut summary = emit_report(&results, &Tolerances::default())?;
    summary["command"] = json!(cmd.name());
    summary["provenance"] = cfg.provenance();
    let name = if cmd == Command::FullReport {
        "report.json".to_string()
    } else {
        format!("{}.json", cmd.name().replace('-', "_"))
    };
    let path = dir.join(name);
    write_json(&path, &summary)?;
    ctx.artifacts.push(path);
    Ok(RunOutput {
        artifacts: ctx.artifacts,
        summary,
    })
}

#[derive(Debug, Parser)]
#[command(name = "roughtail", version, about = "Tail experiments for rough line integrals driven by fBM")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long, short)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config and the ROUGHTAIL_OUTPUT_DIR variable.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter { .. } => "invalid_parameter",
        Error::GridMismatch { .. } => "grid_mismatch",
        Error::NotPositiveDefinite { .. } => "not_positive_definite",
        Error::NonFinite { .. } => "non_finite",
        Error::Uncertified { .. } => "uncertified",
        Error::Degenerate(_) => "degenerate",
        Error::InsufficientData(_) => "insufficient_data",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
    }
}

fn fail(e: &Error) -> i32 {
    eprintln!("{}", json!({ "error": error_kind(e), "message": e.to_string() }));
    exit_code(e)
}

fn resolve(cli: &Cli) -> Result<(ExperimentConfig, PathBuf)> {
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let dir = cli
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("roughtail-out"));
    cfg.output_dir = Some(dir.clone());
    cfg.validate(cli.command)?;
    Ok((cfg, dir))
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (cfg, dir) = match resolve(&cli) {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(&Error::Config("threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => return fail(&Error::Config(format!("thread pool: {e}"))),
    };
    match pool.install(|| run(cli.command, &cfg, &dir)) {
        Ok(out) => {
            for a in &out.artifacts {
                println!("{}", a.display());
            }
            EXIT_OK
        }
        Err(e) => fail(&e),
    }
}
