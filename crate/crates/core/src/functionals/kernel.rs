//! Cell-pair integrals of the kernel `(t − s)^{2H−2}` against per-cell linear
//! functions `f = center + incr·u`, `u ∈ [−½, ½]`.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{gl20, CellFunction};

/// Lags at or below this are summed directly; longer lags go through FFT correlations.
const NEAR_LAGS: usize = 64;

/// Moments `M_pq(k) = ∬_{[−½,½]²} u^p v^q (k + v − u)^{2H−2} du dv` for `k = 1..n−1`
/// and the endpoint weights `V_p(i) = ∫ u^p (i + ½ + u)^{2H−1} du`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    two_h: f64,
    n: usize,
    // index k: [M00, M01, M20, M11]
    pair: Vec<[f64; 4]>,
    edge: Vec<[f64; 3]>,
}

impl KernelTable {
    pub fn new(two_h: f64, n: usize) -> Self {
        let a = two_h - 2.0;
        let mut pair = vec![[0.0; 4]; n.max(1)];
        pair[1..].par_iter_mut().enumerate().for_each(|(i, slot)| {
            *slot = pair_moments(i + 1, a);
        });
        let edge = (0..n).into_par_iter().map(|i| edge_moments(i, two_h)).collect();
        Self { two_h, n, pair, edge }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pair(&self, k: usize) -> [f64; 4] {
        self.pair[k]
    }

    fn same_cell(&self) -> f64 {
        1.0 / ((self.two_h + 1.0) * (self.two_h + 2.0))
    }
}

fn weights(w: f64) -> [f64; 4] {
    let c = 1.0 - w.abs();
    let c3 = c * c * c / 12.0;
    let cw2 = c * w * w / 4.0;
    [c, 0.5 * c * w, c3 + cw2, c3 - cw2]
}

fn pair_moments(k: usize, a: f64) -> [f64; 4] {
    let kf = k as f64;
    let mut m = [0.0; 4];
    let add_gl = |lo: f64, hi: f64, m: &mut [f64; 4]| {
        for &(x, wt) in gl20() {
            let w = lo + (hi - lo) * x;
            let ker = (kf + w).powf(a) * wt * (hi - lo);
            let q = weights(w);
            for p in 0..4 {
                m[p] += q[p] * ker;
            }
        }
    };
    if k == 1 {
        // w ∈ [−1, 0], y = 1 + w = c: the weights are polynomials in y with no constant term
        let pw = |p: f64| 1.0 / (a + p + 1.0);
        m[0] += pw(1.0);
        m[1] += 0.5 * (pw(2.0) - pw(1.0));
        m[2] += pw(3.0) / 3.0 - pw(2.0) / 2.0 + pw(1.0) / 4.0;
        m[3] += -pw(3.0) / 6.0 + pw(2.0) / 2.0 - pw(1.0) / 4.0;
    } else {
        add_gl(-1.0, 0.0, &mut m);
    }
    add_gl(0.0, 1.0, &mut m);
    m
}

fn edge_moments(i: usize, two_h: f64) -> [f64; 3] {
    let e = two_h - 1.0;
    if i == 0 {
        // y = ½ + u ∈ [0, 1]
        let pw = |p: f64| 1.0 / (e + p + 1.0);
        [pw(0.0), pw(1.0) - 0.5 * pw(0.0), pw(2.0) - pw(1.0) + 0.25 * pw(0.0)]
    } else {
        let base = i as f64 + 0.5;
        let mut v = [0.0; 3];
        for &(x, wt) in gl20() {
            let u = x - 0.5;
            let ker = (base + u).powf(e) * wt;
            v[0] += ker;
            v[1] += u * ker;
            v[2] += u * u * ker;
        }
        v
    }
}

fn lag_term_direct(f: &CellFunction, k: usize, m: &[f64; 4]) -> f64 {
    let (c, b) = (f.center(), f.incr());
    let mut acc = 0.0;
    for i in 0..c.len() - k {
        let j = i + k;
        let d = c[j] - c[i];
        acc += d * d * m[0] + (b[i] * b[i] + b[j] * b[j]) * m[2] + 2.0 * d * (b[i] + b[j]) * m[1]
            - 2.0 * b[i] * b[j] * m[3];
    }
    acc
}

fn same_cell_sum(f: &CellFunction, table: &KernelTable) -> f64 {
    table.same_cell() * f.incr().iter().map(|b| b * b).sum::<f64>()
}

/// `∬_{s<t} (f(t) − f(s))² (t − s)^{2H−2}` by an O(n²) sweep over cell pairs.
pub fn j_cells_direct(f: &CellFunction, table: &KernelTable) -> f64 {
    let n = f.n_cells();
    let lags: Vec<f64> = (1..n)
        .into_par_iter()
        .map(|k| lag_term_direct(f, k, &table.pair[k]))
        .collect();
    let scale = f.dt().powf(table.two_h);
    scale * (same_cell_sum(f, table) + lags.iter().sum::<f64>())
}

/// Same double integral; long lags are assembled from FFT correlations of the cell
/// coefficients, giving O(n log n) cost.
pub fn j_cells_lagged(f: &CellFunction, table: &KernelTable) -> f64 {
    let n = f.n_cells();
    let near = NEAR_LAGS.min(n.saturating_sub(1));
    let near_terms: Vec<f64> = (1..=near)
        .into_par_iter()
        .map(|k| lag_term_direct(f, k, &table.pair[k]))
        .collect();
    let mut total = same_cell_sum(f, table) + near_terms.iter().sum::<f64>();
    if near + 1 < n {
        total += far_lags(f, table, near + 1);
    }
    f.dt().powf(table.two_h) * total
}

fn far_lags(f: &CellFunction, table: &KernelTable, k_min: usize) -> f64 {
    let (c, b) = (f.center(), f.incr());
    let n = c.len();
    let m = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let padded = |x: &[f64]| {
        let mut v = vec![Complex64::new(0.0, 0.0); m];
        for (slot, &val) in v.iter_mut().zip(x) {
            slot.re = val;
        }
        fwd.process(&mut v);
        v
    };
    let fc = padded(c);
    let fb = padded(b);
    // corr(x, y)(k) = Σ_i x_i y_{i+k} = IFFT(conj(X)·Y)[k] / m
    let corr = |x: &[Complex64], y: &[Complex64]| {
        let mut v: Vec<Complex64> = x.iter().zip(y).map(|(p, q)| p.conj() * q).collect();
        inv.process(&mut v);
        v.into_iter().map(|z| z.re / m as f64).collect::<Vec<f64>>()
    };
    let cc = corr(&fc, &fc);
    let bb = corr(&fb, &fb);
    let bc = corr(&fb, &fc);
    let cb = corr(&fc, &fb);
    let prefix = |g: &dyn Fn(usize) -> f64| {
        let mut p = vec![0.0; n + 1];
        for i in 0..n {
            p[i + 1] = p[i] + g(i);
        }
        p
    };
    let pc2 = prefix(&|i| c[i] * c[i]);
    let pb2 = prefix(&|i| b[i] * b[i]);
    let pcb = prefix(&|i| c[i] * b[i]);
    let mut total = 0.0;
    for k in k_min..n {
        let lo = n - k; // i runs over 0..lo, j = i + k over k..n
        let s00 = pc2[lo] + (pc2[n] - pc2[k]) - 2.0 * cc[k];
        let s20 = pb2[lo] + (pb2[n] - pb2[k]);
        let s01 = (pcb[n] - pcb[k]) - pcb[lo] + bc[k] - cb[k];
        let s11 = bb[k];
        let mk = &table.pair[k];
        total += s00 * mk[0] + s20 * mk[2] + 2.0 * s01 * mk[1] - 2.0 * s11 * mk[3];
    }
    total
}

/// `∫₀¹ f(t)² (t^{2H−1} + (1 − t)^{2H−1}) dt`, exact for per-cell linear `f`.
pub fn edge_integral(f: &CellFunction, table: &KernelTable) -> f64 {
    let n = f.n_cells();
    let (c, b) = (f.center(), f.incr());
    let mut acc = 0.0;
    for i in 0..n {
        let v = &table.edge[i];
        let r = &table.edge[n - 1 - i];
        let w0 = v[0] + r[0];
        let w1 = v[1] - r[1];
        let w2 = v[2] + r[2];
        acc += c[i] * c[i] * w0 + 2.0 * c[i] * b[i] * w1 + b[i] * b[i] * w2;
    }
    f.dt().powf(table.two_h) * acc
}
