//! One-parameter gamma fits of unit-mean-normalized `X_{<=k}` samples.
//!
//! The model is `Gamma(shape a, rate a / k)`, whose mean is `k` for every
//! `a`. The shape is chosen to minimize Pearson's chi-square over bins that
//! are equiprobable under the candidate law; the search is golden-section on
//! `ln a`, cross-checked by a coarse grid.
//!
//! Lattice-sampled areas are multiples of one cell area. Binning such values
//! directly gives a chi-square dominated by the quantization (empty and
//! overfull bins alternate), so when a quantum `h` is given each sample is
//! spread uniformly over `[v - h/2, v + h/2]` before counting.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::areas::{area_samples, estimate_areas_2d_serial, Normalization, OrderSelector};
use crate::geometry::{gen_uniform, Domain};
use crate::knn::build_index;
use crate::rng::{derive_seed, tags};
use crate::special::{gamma_p, gamma_quantile};
use crate::{Error, Result};

/// Search interval for `ln a`.
const LN_A_MIN: f64 = -std::f64::consts::LN_2;
const LN_A_MAX: f64 = 9.210_340_371_976_184; // ln 1e4
const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinCount {
    pub lo: f64,
    pub hi: f64,
    pub observed: f64,
    pub expected: f64,
}

/// How the samples were produced, when the fit came from the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub n_points: usize,
    pub iterations: u64,
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub k: u32,
    pub a_k: f64,
    pub chi2: f64,
    /// Degrees of freedom: bins minus one minus the fitted parameter.
    pub dof: usize,
    pub sample_size: usize,
    pub quantum: Option<f64>,
    /// True when the coarse grid found a better basin than the first search.
    pub grid_fallback: bool,
    pub bins: Vec<BinCount>,
    pub generation: Option<Generation>,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FitOptions {
    /// Requested number of equiprobable bins (reduced to keep expected >= 5).
    pub bins: usize,
    /// Spacing of quantized samples, in the same units as the samples.
    pub quantum: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            bins: 100,
            quantum: None,
        }
    }
}

/// Sorted samples with prefix sums, answering "how much sample mass lies
/// below x" under uniform spreading of width `h`.
struct Spread {
    xs: Vec<f64>,
    prefix: Vec<f64>,
    h: f64,
}

impl Spread {
    fn new(samples: &[f64], h: f64) -> Self {
        let mut xs = samples.to_vec();
        xs.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(xs.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for &x in &xs {
            acc += x;
            prefix.push(acc);
        }
        Spread { xs, prefix, h }
    }

    /// Mass at or below `x`.
    fn mass_below(&self, x: f64) -> f64 {
        if x.is_infinite() {
            return if x > 0.0 { self.xs.len() as f64 } else { 0.0 };
        }
        if self.h == 0.0 {
            return self.xs.partition_point(|&v| v <= x) as f64;
        }
        let half = 0.5 * self.h;
        let full = self.xs.partition_point(|&v| v + half <= x);
        let part = self.xs.partition_point(|&v| v - half < x);
        if part <= full {
            return full as f64;
        }
        let cnt = (part - full) as f64;
        let sum = self.prefix[part] - self.prefix[full];
        // sum over straddling v of (x - (v - h/2)) / h
        full as f64 + (cnt * (x + half) - sum) / self.h
    }
}

fn equiprobable_bins(n: usize, requested: usize) -> usize {
    requested.min((n as f64 / MIN_EXPECTED).floor() as usize).max(2)
}

fn chi2_at(
    spread: &Spread,
    k: f64,
    shape: f64,
    bins: usize,
    detail: Option<&mut Vec<BinCount>>,
) -> f64 {
    let n = spread.xs.len() as f64;
    let rate = shape / k;
    let expected = n / bins as f64;
    let mut lo = 0.0;
    // Spread mass below zero belongs to the first bin.
    let mut below_lo = 0.0;
    let mut chi2 = 0.0;
    let mut out = detail;
    for b in 1..=bins {
        let hi = if b == bins {
            f64::INFINITY
        } else {
            gamma_quantile(shape, rate, b as f64 / bins as f64)
        };
        let below_hi = spread.mass_below(hi);
        let observed = below_hi - below_lo;
        chi2 += (observed - expected) * (observed - expected) / expected;
        if let Some(v) = out.as_deref_mut() {
            v.push(BinCount {
                lo,
                hi,
                observed,
                expected,
            });
        }
        lo = hi;
        below_lo = below_hi;
    }
    chi2
}

fn golden(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Fits `a_k` with default options (100 bins, no quantum).
pub fn fit_ak(samples: &[f64], k: u32, bins: usize) -> Result<FitResult> {
    fit_ak_with(
        samples,
        k,
        &FitOptions {
            bins,
            quantum: None,
        },
    )
}

pub fn fit_ak_with(samples: &[f64], k: u32, opts: &FitOptions) -> Result<FitResult> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if samples.len() < 2 * MIN_EXPECTED as usize {
        return Err(Error::invalid(format!(
            "need at least {} samples to fit, got {}",
            2 * MIN_EXPECTED as usize,
            samples.len()
        )));
    }
    if opts.bins < 2 {
        return Err(Error::invalid("need at least 2 bins"));
    }
    if let Some(h) = opts.quantum {
        if !(h.is_finite() && h >= 0.0) {
            return Err(Error::invalid(format!("quantum must be >= 0, got {h}")));
        }
    }
    if samples.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::invalid("samples must be finite and >= 0"));
    }
    let first = samples[0];
    if samples.iter().all(|&v| v == first) {
        return Err(Error::Numeric(
            "all samples are equal; a gamma shape cannot be fitted".into(),
        ));
    }
    let kf = k as f64;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if ((mean - kf) / kf).abs() > 0.05 {
        return Err(Error::invalid(format!(
            "sample mean {mean} is not within 5% of k = {k}; samples must be normalized to \
             unit mean cell size (divide by A_tot / N)"
        )));
    }

    let spread = Spread::new(samples, opts.quantum.unwrap_or(0.0));
    let bins = equiprobable_bins(samples.len(), opts.bins);
    let objective = |ln_a: f64| chi2_at(&spread, kf, ln_a.exp(), bins, None);

    let tol = 1e-7;
    let (mut best_ln, mut best) = golden(&objective, LN_A_MIN, LN_A_MAX, tol);

    let grid_n = 64;
    let step = (LN_A_MAX - LN_A_MIN) / (grid_n - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..grid_n)
        .map(|i| {
            let x = LN_A_MIN + step * i as f64;
            (x, objective(x))
        })
        .collect();
    let (gi, &(gx, gv)) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("grid is non-empty");
    let mut grid_fallback = false;
    if gv < best && (gx - best_ln).abs() > 2.0 * step {
        let lo = LN_A_MIN + step * gi.saturating_sub(1) as f64;
        let hi = (LN_A_MIN + step * (gi + 1) as f64).min(LN_A_MAX);
        let (x, v) = golden(&objective, lo, hi, tol);
        if v < best {
            best_ln = x;
            best = v;
            grid_fallback = true;
        }
    }
    if !best.is_finite() {
        return Err(Error::Numeric("chi-square is not finite at the optimum".into()));
    }

    let a_k = best_ln.exp();
    let mut detail = Vec::with_capacity(bins);
    let chi2 = chi2_at(&spread, kf, a_k, bins, Some(&mut detail));
    Ok(FitResult {
        k,
        a_k,
        chi2,
        dof: bins.saturating_sub(2),
        sample_size: samples.len(),
        quantum: opts.quantum,
        grid_fallback,
        bins: detail,
        generation: None,
    })
}

/// Chi-square of a given shape under the same binning as [`fit_ak_with`].
pub fn chi2_for_shape(samples: &[f64], k: u32, shape: f64, opts: &FitOptions) -> f64 {
    let spread = Spread::new(samples, opts.quantum.unwrap_or(0.0));
    let bins = equiprobable_bins(samples.len(), opts.bins);
    chi2_at(&spread, k as f64, shape, bins, None)
}

/// Fitted shapes keyed by `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AkTable {
    values: BTreeMap<u32, f64>,
}

/// Simulated shapes for `k = 1..=5` on a 2D Poisson layout.
pub const BUILTIN_AK: [(u32, f64); 5] = [(1, 3.53), (2, 7.19), (3, 11.06), (4, 15.21), (5, 21.17)];

impl AkTable {
    pub fn builtin() -> Self {
        AkTable {
            values: BUILTIN_AK.into_iter().collect(),
        }
    }

    /// Validated table; rejects duplicate `k`, `k = 0` and non-positive shapes.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, a) in pairs {
            if k == 0 {
                return Err(Error::Data("k must be >= 1".into()));
            }
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Data(format!("a_{k} must be > 0, got {a}")));
            }
            if values.insert(k, a).is_some() {
                return Err(Error::Data(format!("duplicate entry for k = {k}")));
            }
        }
        Ok(AkTable { values })
    }

    pub fn from_fits(fits: &[FitResult]) -> Result<Self> {
        Self::from_pairs(fits.iter().map(|f| (f.k, f.a_k)))
    }

    pub fn get(&self, k: u32) -> Option<f64> {
        self.values.get(&k).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.values.iter().map(|(&k, &a)| (k, a))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Least-squares line `(intercept, slope)` through the table.
    pub fn line(&self) -> Result<(f64, f64)> {
        least_squares(self.iter().map(|(k, a)| (k as f64, a)))
    }

    /// Tabulated shape when present, else the least-squares line at `k`.
    pub fn shape_for(&self, k: u32) -> Result<f64> {
        if k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if let Some(a) = self.get(k) {
            return Ok(a);
        }
        let (b0, b1) = self.line()?;
        let a = b0 + b1 * k as f64;
        if a <= 0.0 {
            return Err(Error::Numeric(format!(
                "extrapolated a_{k} = {a} is not positive"
            )));
        }
        Ok(a)
    }

    /// CSV `k,a_k`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "a_k"]).map_err(crate::areas::csv_err)?;
        for (k, a) in self.iter() {
            w.write_record([k.to_string(), crate::areas::fmt_f64(a)])
                .map_err(crate::areas::csv_err)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }
}

fn least_squares(points: impl Iterator<Item = (f64, f64)>) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points.collect();
    if pts.len() < 2 {
        return Err(Error::invalid(format!(
            "a line needs at least 2 fitted points, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("fitted points share a single k"));
    }
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// `a_k` from fitted results: the fitted value when `k` was fitted, else
/// the least-squares line through all fits.
pub fn extrapolate_ak(k: u32, fitted: &[FitResult]) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if fitted.len() < 2 {
        return Err(Error::invalid(format!(
            "extrapolation needs at least 2 fitted results, got {}",
            fitted.len()
        )));
    }
    if let Some(f) = fitted.iter().find(|f| f.k == k) {
        return Ok(f.a_k);
    }
    let (b0, b1) = least_squares(fitted.iter().map(|f| (f.k as f64, f.a_k)))?;
    Ok(b0 + b1 * k as f64)
}

/// Configuration of the area-shape pipeline: `iterations` independent
/// layouts of `n_points` uniform points on a torus of unit mean cell size,
/// sampled at pitch `sqrt(epsilon_sq)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_points: usize,
    pub iterations: u64,
    /// Squared sampling pitch in units of the mean cell size.
    pub epsilon_sq: f64,
    pub k_max: u32,
    pub seed: u64,
    pub bins: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_points: 100,
            iterations: 10_000,
            epsilon_sq: 0.1,
            k_max: 5,
            seed: 1,
            bins: 100,
        }
    }
}

/// Pooled unit-mean `X_{<=k}` samples, one vector per `k = 1..=k_max`,
/// plus the value quantum (normalized cell area).
pub fn pipeline_samples(cfg: &PipelineConfig) -> Result<(Vec<Vec<f64>>, f64)> {
    if cfg.n_points == 0 || cfg.iterations == 0 || cfg.k_max == 0 {
        return Err(Error::invalid("n_points, iterations and k_max must be >= 1"));
    }
    if cfg.k_max as usize > cfg.n_points {
        return Err(Error::NotEnoughPoints {
            k: cfg.k_max as usize,
            n: cfg.n_points,
        });
    }
    if !(cfg.epsilon_sq.is_finite() && cfg.epsilon_sq > 0.0) {
        return Err(Error::invalid("epsilon_sq must be > 0"));
    }
    let side = (cfg.n_points as f64).sqrt();
    let domain = Domain::square_torus(side)?;
    let eps = cfg.epsilon_sq.sqrt();
    let k_max = cfg.k_max as usize;
    let (_, pitch) = {
        let probe = gen_uniform(&domain, 1, 0)?;
        crate::areas::lattice_for(&probe, eps)?
    };
    let quantum = pitch[0] * pitch[1] * cfg.n_points as f64 / domain.total_measure();

    let per_iter: Vec<Vec<f64>> = (0..cfg.iterations)
        .into_par_iter()
        .map(|it| {
            let seed = derive_seed(cfg.seed, tags::REPLICATE + it);
            let ps = gen_uniform(&domain, cfg.n_points, seed)?;
            let idx = build_index(&ps)?;
            let table = estimate_areas_2d_serial(&ps, k_max, eps, &idx)?;
            let mut out = Vec::with_capacity(k_max * cfg.n_points);
            for k in 1..=k_max {
                out.extend(area_samples(
                    &table,
                    OrderSelector::Cumulative(k),
                    Normalization::UnitMean,
                )?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut pooled = vec![Vec::with_capacity(cfg.iterations as usize * cfg.n_points); k_max];
    for chunk in per_iter {
        for (k, vals) in chunk.chunks(cfg.n_points).enumerate() {
            pooled[k].extend_from_slice(vals);
        }
    }
    Ok((pooled, quantum))
}

/// Generates areas and fits `a_k` for `k = 1..=k_max`.
pub fn table1_pipeline(cfg: &PipelineConfig) -> Result<Vec<FitResult>> {
    let (pooled, quantum) = pipeline_samples(cfg)?;
    let generation = Generation {
        n_points: cfg.n_points,
        iterations: cfg.iterations,
        epsilon: cfg.epsilon_sq.sqrt(),
        seed: cfg.seed,
    };
    pooled
        .par_iter()
        .enumerate()
        .map(|(i, samples)| {
            let mut fit = fit_ak_with(
                samples,
                i as u32 + 1,
                &FitOptions {
                    bins: cfg.bins,
                    quantum: Some(quantum),
                },
            )?;
            fit.generation = Some(generation.clone());
            Ok(fit)
        })
        .collect()
}

/// `P(a, x)` re-exported for callers building gamma CDF grids.
pub fn gamma_area_cdf(k: u32, shape: f64, x: f64) -> f64 {
    gamma_p(shape, shape / k as f64 * x.max(0.0))
}
