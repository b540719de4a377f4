use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::weierstrass::NonDegData;

use super::gl8;

#[derive(Debug, Clone, Copy)]
pub enum PhiKind {
    /// `sin(omega·x + phase)`.
    Sine { omega: f64, phase: f64 },
    Constant(f64),
    /// `φ(u) = u`. Unbounded, so only admitted for closed-form checks.
    Identity,
    /// User-supplied `φ, φ′, φ″`; segment averages use an 8-point Gauss rule.
    Custom {
        f: fn(f64) -> f64,
        df: fn(f64) -> f64,
        d2f: fn(f64) -> f64,
    },
}

/// A bounded smooth scalar function with recorded uniform bounds of `φ, φ′, φ″`.
#[derive(Debug, Clone)]
pub struct PhiSpec {
    pub kind: PhiKind,
    pub sup_phi: f64,
    pub sup_dphi: f64,
    pub sup_ddphi: f64,
    pub period: Option<f64>,
    pub nondeg: Option<NonDegData>,
}

impl PhiSpec {
    pub fn sine(omega: f64, phase: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) || !phase.is_finite() {
            return Err(Error::param("omega", format!("need finite omega > 0, got {omega}")));
        }
        Ok(Self {
            kind: PhiKind::Sine { omega, phase },
            sup_phi: 1.0,
            sup_dphi: omega,
            sup_ddphi: omega * omega,
            period: Some(2.0 * PI / omega),
            nondeg: None,
        })
    }

    pub fn sin() -> Self {
        Self::sine(1.0, 0.0).expect("unit sine is valid")
    }

    pub fn constant(c: f64) -> Self {
        Self {
            kind: PhiKind::Constant(c),
            sup_phi: c.abs(),
            sup_dphi: 0.0,
            sup_ddphi: 0.0,
            period: Some(1.0),
            nondeg: None,
        }
    }

    /// The unbounded test function `φ(u) = u`.
    pub fn identity_for_tests() -> Self {
        Self {
            kind: PhiKind::Identity,
            sup_phi: f64::INFINITY,
            sup_dphi: 1.0,
            sup_ddphi: 0.0,
            period: None,
            nondeg: None,
        }
    }

    pub fn custom(
        f: fn(f64) -> f64,
        df: fn(f64) -> f64,
        d2f: fn(f64) -> f64,
        bounds: [f64; 3],
        period: Option<f64>,
    ) -> Result<Self> {
        if bounds.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::param("bounds", format!("need finite nonnegative bounds, got {bounds:?}")));
        }
        Ok(Self {
            kind: PhiKind::Custom { f, df, d2f },
            sup_phi: bounds[0],
            sup_dphi: bounds[1],
            sup_ddphi: bounds[2],
            period,
            nondeg: None,
        })
    }

    pub fn with_nondeg(mut self, data: NonDegData) -> Self {
        self.nondeg = Some(data);
        self
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_phi.is_finite()
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, PhiKind::Constant(_))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            PhiKind::Sine { omega, phase } => (omega * x + phase).sin(),
            PhiKind::Constant(c) => c,
            PhiKind::Identity => x,
            PhiKind::Custom { f, .. } => f(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self.kind {
            PhiKind::Sine { omega, phase } => omega * (omega * x + phase).cos(),
            PhiKind::Constant(_) => 0.0,
            PhiKind::Identity => 1.0,
            PhiKind::Custom { df, .. } => df(x),
        }
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        match self.kind {
            PhiKind::Sine { omega, phase } => -omega * omega * (omega * x + phase).sin(),
            PhiKind::Constant(_) | PhiKind::Identity => 0.0,
            PhiKind::Custom { d2f, .. } => d2f(x),
        }
    }

    /// `∫₀¹ φ(a + (b − a)u) du`, the mean of `φ` along a straight segment.
    pub fn segment_average(&self, a: f64, b: f64) -> f64 {
        match self.kind {
            PhiKind::Sine { omega, phase } => {
                let half = 0.5 * omega * (b - a);
                (0.5 * omega * (a + b) + phase).sin() * sinc(half)
            }
            PhiKind::Constant(c) => c,
            PhiKind::Identity => 0.5 * (a + b),
            PhiKind::Custom { f, .. } => gl8()
                .iter()
                .map(|&(u, w)| w * f(a + (b - a) * u))
                .sum(),
        }
    }

    /// Check the recorded bounds on `n` evenly spaced points of `[lo, hi]`.
    pub fn audit(&self, lo: f64, hi: f64, n: usize) -> Result<()> {
        let n = n.max(2);
        let slack = 1e-12;
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let checks = [
                ("sup_phi", self.eval(x).abs(), self.sup_phi),
                ("sup_dphi", self.deriv(x).abs(), self.sup_dphi),
                ("sup_ddphi", self.deriv2(x).abs(), self.sup_ddphi),
            ];
            for (name, got, bound) in checks {
                if got > bound * (1.0 + slack) + slack {
                    return Err(Error::param(
                        name,
                        format!("bound {bound} violated at x = {x}: |value| = {got}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}
