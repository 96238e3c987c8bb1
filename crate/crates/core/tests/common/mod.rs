//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use abgraph::geometry::{Boundary, PointSet};

/// Lanczos log-gamma (g = 7, 9 terms), x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod 7/15 panel: (kronrod estimate, |kronrod - gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return k;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss-Kronrod quadrature of `f` on `[a, b]` to absolute `tol`,
/// starting from `panels` equal pieces.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, panels: usize) -> f64 {
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * w;
            adapt(&f, lo, lo + w, tol / panels as f64, 30)
        })
        .sum()
}

/// `∫ Poisson(n; c x) Gamma(x; shape, rate) dx` by quadrature.
///
/// The integrand is proportional to a Gamma(shape + n, rate + c) density,
/// which fixes a safe integration window.
pub fn poisson_gamma_mixture(n: u64, c: f64, shape: f64, rate: f64) -> f64 {
    let nf = n as f64;
    let post_shape = shape + nf;
    let post_rate = rate + c;
    let mean = post_shape / post_rate;
    let sd = post_shape.sqrt() / post_rate;
    let lo = (mean - 40.0 * sd).max(0.0);
    let hi = mean + 40.0 * sd;
    let ln_norm = shape * rate.ln() - ln_gamma(shape) - ln_gamma(nf + 1.0) + nf * c.ln();
    let f = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        (ln_norm + (nf + shape - 1.0) * x.ln() - (c + rate) * x).exp()
    };
    integrate(f, lo, hi, 1e-14, 64)
}

/// Periodic or Euclidean squared distance computed from scratch.
pub fn dist_sq(ps: &PointSet, p: &[f64; 2], q: &[f64; 2]) -> f64 {
    let d = ps.domain();
    let ext = d.extent();
    let mut s = 0.0;
    for a in 0..d.dim() {
        let mut dx = (p[a] - q[a]).abs();
        if d.boundary() == Boundary::Torus {
            dx = dx.rem_euclid(ext[a]);
            dx = dx.min(ext[a] - dx);
        }
        s += dx * dx;
    }
    s
}

/// The `k` nearest ids by sorting all points on (distance, id).
pub fn brute_force_knn(ps: &PointSet, q: &[f64; 2], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = ps
        .coords()
        .iter()
        .enumerate()
        .map(|(i, p)| (dist_sq(ps, q, p), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(d, i)| (i, d.sqrt())).collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Exact first-order Voronoi cell of point `i` on a 2D torus by clipping the
/// box of half-extents with every bisector among the 9 periodic images.
/// Returns `(area, perimeter)`.
pub fn voronoi_cell_torus(ps: &PointSet, i: usize) -> (f64, f64) {
    let [w, h] = ps.domain().extent();
    let p = ps.coords()[i];
    let mut poly = vec![
        [p[0] - w / 2.0, p[1] - h / 2.0],
        [p[0] + w / 2.0, p[1] - h / 2.0],
        [p[0] + w / 2.0, p[1] + h / 2.0],
        [p[0] - w / 2.0, p[1] + h / 2.0],
    ];
    for (j, q0) in ps.coords().iter().enumerate() {
        for sx in [-1.0, 0.0, 1.0] {
            for sy in [-1.0, 0.0, 1.0] {
                if j == i && sx == 0.0 && sy == 0.0 {
                    continue;
                }
                let q = [q0[0] + sx * w, q0[1] + sy * h];
                let n = [q[0] - p[0], q[1] - p[1]];
                let c = 0.5 * (n[0] * (p[0] + q[0]) + n[1] * (p[1] + q[1]));
                poly = clip(&poly, n, c);
            }
        }
    }
    let m = poly.len();
    let (mut area, mut per) = (0.0, 0.0);
    for a in 0..m {
        let (u, v) = (poly[a], poly[(a + 1) % m]);
        area += u[0] * v[1] - v[0] * u[1];
        per += ((v[0] - u[0]).powi(2) + (v[1] - u[1]).powi(2)).sqrt();
    }
    (0.5 * area.abs(), per)
}

/// Keeps the part of a convex polygon with `n . x <= c`.
fn clip(poly: &[[f64; 2]], n: [f64; 2], c: f64) -> Vec<[f64; 2]> {
    let side = |x: &[f64; 2]| n[0] * x[0] + n[1] * x[1] - c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for a in 0..poly.len() {
        let (u, v) = (poly[a], poly[(a + 1) % poly.len()]);
        let (su, sv) = (side(&u), side(&v));
        if su <= 0.0 {
            out.push(u);
        }
        if (su < 0.0) != (sv < 0.0) && su != sv {
            let t = su / (su - sv);
            out.push([u[0] + t * (v[0] - u[0]), u[1] + t * (v[1] - u[1])]);
        }
    }
    out
}
