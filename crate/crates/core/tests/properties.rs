use proptest::prelude::*;

use roughtail::fbm::{fbm_covariance, GridPath, HurstParam};
use roughtail::functionals::{frac_sobolev_sq_cells, CellFunction, PhiSpec};
use roughtail::roughint::{dyadic_interp, rs_integral};
use roughtail::tail::{
    fit_weibull_exponent, golden_section_min, lower_curve_objective, theory_exponent, theory_lower_curve, TailEstimate,
    TailMethod,
};
use roughtail::weierstrass::{eval_h_alpha, WeierstrassParams};

fn hurst(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

fn path(level: u32, v: Vec<f64>) -> GridPath {
    GridPath::new(level, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn covariance_symmetric_and_self_similar(s in 0.0f64..3.0, t in 0.0f64..3.0, h in 0.05f64..0.95, c in 0.1f64..4.0) {
        let r = fbm_covariance(s, t, hurst(h)).unwrap();
        prop_assert_eq!(r, fbm_covariance(t, s, hurst(h)).unwrap());
        let scaled = fbm_covariance(c * s, c * t, hurst(h)).unwrap();
        prop_assert!((scaled - c.powf(2.0 * h) * r).abs() <= 1e-12 * (1.0 + scaled.abs()));
    }

    #[test]
    fn sobolev_norm_is_quadratic(v in prop::collection::vec(-2.0f64..2.0, 64), h in 0.26f64..0.49) {
        let f = CellFunction::steps(6, v).unwrap();
        let base = frac_sobolev_sq_cells(&f, hurst(h)).unwrap();
        prop_assert!(base >= 0.0);
        for c in [-2.0, 0.5, 3.0] {
            let s = frac_sobolev_sq_cells(&f.scaled(c), hurst(h)).unwrap();
            prop_assert!((s - c * c * base).abs() <= 1e-10 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn weierstrass_scaling(t in 0.01f64..4.0, m in -3i32..=3, a in 0.55f64..0.95) {
        let p = WeierstrassParams::new(a).unwrap();
        let lhs = eval_h_alpha(f64::from(m).exp2() * t, &p).unwrap();
        let rhs = (f64::from(m) * a).exp2() * eval_h_alpha(t, &p).unwrap();
        prop_assert!((lhs - rhs).abs() <= p.tol * (1.0 + (f64::from(m) * a).exp2()));
    }

    #[test]
    fn closed_form_minimiser_matches_golden_section(
        lambda in 1.0f64..50.0, c2 in 0.1f64..5.0, c4 in 0.1f64..5.0, h in 0.26f64..0.49, gap in 0.01f64..0.45,
    ) {
        let alpha = (h + 0.5 + gap).min(0.999);
        let hp = hurst(h);
        let c = theory_lower_curve(lambda, hp, alpha, c2, c4).unwrap();
        let f = |r: f64| lower_curve_objective(r, lambda, hp, alpha, c2, c4);
        // bracket by doubling until f turns upward
        let mut hi = 1e-6;
        while f(2.0 * hi) < f(hi) {
            hi *= 2.0;
        }
        // minimising f itself pins r only to ~sqrt(eps) since f is flat at its minimum,
        // so the location is taken from |r f'(r)|, whose zero is resolved to ~eps
        let r_f = golden_section_min(f, hi / 4.0, 2.0 * hi, 1e-15);
        prop_assert!((f(r_f) - c.f_min).abs() <= 1e-13 * c.f_min);
        let k = 2.0 * alpha / (1.0 - 2.0 * h);
        let slope = |r: f64| (-c2 * lambda * lambda / r + c4 * k * r.powf(k)).abs();
        let r = golden_section_min(slope, hi / 4.0, 2.0 * hi, 1e-15);
        prop_assert!((r - c.r_star).abs() <= 1e-8 * c.r_star.max(1.0), "{} vs {}", r, c.r_star);
    }

    #[test]
    fn exponent_exceeds_critical_iff_alpha_large(h in 0.2501f64..0.4999, a in 0.01f64..0.99) {
        prop_assert_eq!(theory_exponent(hurst(h), a) > 1.0 + 2.0 * h, a > h + 0.5);
    }

    #[test]
    fn weibull_fit_recovers_planted_exponent(gamma in 0.5f64..3.0, c in 0.1f64..3.0) {
        let est: Vec<TailEstimate> = [1.5, 2.0, 3.0, 4.5, 7.0].iter().map(|&l: &f64| {
            let lp = -c * l.powf(gamma);
            TailEstimate {
                lambda: l, p_hat: lp.exp(), log_p_hat: lp, stderr: 0.0, rel_stderr: 0.0,
                method: TailMethod::PlainMc, n_samples: 1000, seed: 0, ess: 1000.0, shift_scale: 0.0, max_log_weight: 0.0,
            }
        }).collect();
        let fit = fit_weibull_exponent(&est).unwrap();
        prop_assert!((fit.gamma_hat - gamma).abs() < 1e-9);
    }

    #[test]
    fn integral_linear_and_antisymmetric_in_y(
        x in prop::collection::vec(-3.0f64..3.0, 33),
        y1 in prop::collection::vec(-1.0f64..1.0, 33),
        y2 in prop::collection::vec(-1.0f64..1.0, 33),
        a in -2.0f64..2.0, b in -2.0f64..2.0, m in 0u32..=5,
    ) {
        let phi = PhiSpec::sin();
        let (x, p1, p2) = (path(5, x), path(5, y1), path(5, y2));
        let combo = p1.scaled(a).add_scaled(b, &p2).unwrap();
        let i1 = rs_integral(&x, &p1, &phi, m).unwrap();
        let i2 = rs_integral(&x, &p2, &phi, m).unwrap();
        let ic = rs_integral(&x, &combo, &phi, m).unwrap();
        prop_assert!((ic - (a * i1 + b * i2)).abs() <= 1e-12 * (1.0 + ic.abs()));
        let neg = rs_integral(&x, &p1.scaled(-1.0), &phi, m).unwrap();
        prop_assert_eq!(neg, -i1);
    }

    #[test]
    fn interpolation_is_a_projection(x in prop::collection::vec(-3.0f64..3.0, 65), m in 0u32..=6) {
        let x = path(6, x);
        let once = dyadic_interp(&x, m).unwrap();
        let twice = dyadic_interp(&once, m).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
        }
    }
}
