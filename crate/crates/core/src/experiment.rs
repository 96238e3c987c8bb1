//! Monte Carlo degree experiments.
//!
//! A replicate draws (or reuses) the B-points, draws Poisson A-points on the
//! same domain, connects every A-point to its `k` nearest (or shadowed
//! nearest) B-points and records each B-point's degree, zero degrees
//! included. Replicate `r` uses the child seed
//! `derive_seed(master, REPLICATE + r)`, and within a replicate the B-points,
//! A-points and each 1024-user chunk of shadowing draws have their own
//! streams, so every result is a pure function of the master seed and is
//! independent of the thread count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{DistSpec, SummaryStats};
use crate::areas::{csv_err, fmt_f64};
use crate::fitting::AkTable;
use crate::geometry::{
    gen_hex_grid, gen_line_grid, gen_poisson, sample_poisson, Domain, HexGridSpec, PointSet,
};
use crate::knn::{build_index, ShadowConfig};
use crate::rng::{self, derive_seed, tags};
use crate::stats::{ks_discrete, total_variation};
use crate::{Error, Result};

/// Users per shadowing stream.
pub const CHUNK: usize = 1024;

/// Where the B-points come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Fresh Poisson points each replicate (1D or 2D per the domain),
    /// `density` in points per meter or per square meter.
    Poisson { density: f64 },
    /// Equally spaced points, `spacing` in meters (1D).
    LineGrid { spacing: f64 },
    /// Triangular lattice (2D torus).
    HexGrid { spec: HexGridSpec },
    /// A fixed point set, e.g. ingested station locations.
    Stations { points: PointSet },
}

impl Layout {
    pub fn name(&self) -> &'static str {
        match self {
            Layout::Poisson { .. } => "poisson",
            Layout::LineGrid { .. } => "line_grid",
            Layout::HexGrid { .. } => "hex_grid",
            Layout::Stations { .. } => "stations",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub layout: Layout,
    /// Ignored for [`Layout::Stations`], which carries its own domain.
    pub domain: Domain,
    /// A-point density (points per meter or per square meter).
    pub lambda_a: f64,
    pub k_values: Vec<u32>,
    pub replicates: usize,
    pub seed: u64,
    pub shadow: Option<ShadowConfig>,
}

impl ExperimentConfig {
    pub fn domain(&self) -> &Domain {
        match &self.layout {
            Layout::Stations { points } => points.domain(),
            _ => &self.domain,
        }
    }

    pub fn k_max(&self) -> u32 {
        self.k_values.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be >= 1"));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::invalid("k values must be a non-empty list of integers >= 1"));
        }
        if !(self.lambda_a.is_finite() && self.lambda_a > 0.0) {
            return Err(Error::invalid(format!(
                "lambda_A must be finite and > 0, got {}",
                self.lambda_a
            )));
        }
        if let Some(s) = &self.shadow {
            ShadowConfig::new(s.sigma, s.seed)?;
        }
        match &self.layout {
            Layout::Poisson { density } if !(density.is_finite() && *density > 0.0) => Err(
                Error::invalid(format!("B density must be finite and > 0, got {density}")),
            ),
            _ => Ok(()),
        }
    }

    /// B-points of replicate `r`.
    pub fn b_points(&self, replicate: usize) -> Result<PointSet> {
        match &self.layout {
            Layout::Poisson { density } => {
                let seed = derive_seed(replicate_seed(self.seed, replicate), tags::B_POINTS);
                gen_poisson(&self.domain, *density, seed)
            }
            Layout::LineGrid { spacing } => gen_line_grid(&self.domain, *spacing),
            Layout::HexGrid { spec } => gen_hex_grid(&self.domain, spec),
            Layout::Stations { points } => Ok(points.clone()),
        }
    }

    /// Analytic degree law for connectivity `k`. Poisson 2D layouts and
    /// station files use the compound Poisson-gamma law with `a_k` from
    /// `ak`; B density for station files is `N / A_tot`.
    pub fn reference_law(&self, k: u32, ak: &AkTable) -> Result<DistSpec> {
        let d = self.domain();
        match &self.layout {
            Layout::LineGrid { spacing } => DistSpec::line_grid(self.lambda_a, k, *spacing),
            Layout::HexGrid { spec } => {
                let n = crate::geometry::hex_lattice(d, spec)?.len();
                DistSpec::hex_2d(self.lambda_a, k, d.total_measure(), n)
            }
            Layout::Poisson { density } => poisson_law(d, self.lambda_a, *density, k, ak),
            Layout::Stations { points } => {
                let density = points.len() as f64 / d.total_measure();
                poisson_law(d, self.lambda_a, density, k, ak)
            }
        }
    }
}

fn poisson_law(d: &Domain, lambda_a: f64, lambda_b: f64, k: u32, ak: &AkTable) -> Result<DistSpec> {
    if d.dim() == 1 {
        DistSpec::cpe(lambda_a, lambda_b, k)
    } else {
        DistSpec::cpg(lambda_a / lambda_b, k, ak.shape_for(k)?)
    }
}

pub fn replicate_seed(master: u64, replicate: usize) -> u64 {
    derive_seed(master, tags::REPLICATE + replicate as u64)
}

/// Degrees of every B-point in one replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateDegrees {
    pub k_values: Vec<u32>,
    pub n_a: u64,
    /// `degrees[i][b]`: degree of B-point `b` for `k_values[i]`.
    pub degrees: Vec<Vec<u32>>,
}

impl ReplicateDegrees {
    pub fn histogram(&self, i: usize) -> DegreeHistogram {
        let mut h = DegreeHistogram::new(self.k_values[i]);
        for &d in &self.degrees[i] {
            h.add(d as usize, 1);
        }
        h.replicates = 1;
        h
    }
}

/// Connects Poisson A-points to `b_points` for one replicate.
pub fn degrees_one_replicate(
    b_points: &PointSet,
    cfg: &ExperimentConfig,
    replicate: usize,
) -> Result<ReplicateDegrees> {
    cfg.validate()?;
    let k_max = cfg.k_max() as usize;
    b_points.require(k_max)?;
    let rep_seed = replicate_seed(cfg.seed, replicate);
    let domain = b_points.domain();
    let users = sample_poisson(
        domain,
        cfg.lambda_a,
        &mut rng::child_stream(rep_seed, tags::A_POINTS),
    )?;
    let index = build_index(b_points)?;
    let nb = b_points.len();
    let mut ks: Vec<(usize, u32)> = cfg.k_values.iter().copied().enumerate().collect();
    ks.sort_by_key(|&(_, k)| k);
    let shadow = cfg.shadow.filter(|s| s.sigma > 0.0);
    let shadow_base = shadow.map(|s| derive_seed(derive_seed(rep_seed, tags::SHADOW), s.seed));

    let slots = cfg.k_values.len() * nb;
    let degrees = users
        .par_chunks(CHUNK)
        .enumerate()
        .try_fold(
            || (vec![0u32; slots], Vec::with_capacity(k_max + 1)),
            |(mut acc, mut buf), (c, chunk)| {
                let mut stream = shadow_base.map(|b| rng::child_stream(b, c as u64));
                for q in chunk {
                    match (&shadow, stream.as_mut()) {
                        (Some(s), Some(st)) => index.shadowed_keys(q, k_max, s, st, &mut buf)?,
                        _ => index.k_nearest_keys(q, k_max, &mut buf)?,
                    }
                    for (j, &(_, id)) in buf.iter().enumerate() {
                        // Neighbour j counts for every k > j.
                        for &(slot, k) in ks.iter().rev() {
                            if (k as usize) <= j {
                                break;
                            }
                            acc[slot * nb + id as usize] += 1;
                        }
                    }
                }
                Ok::<_, Error>((acc, buf))
            },
        )
        .map(|r| r.map(|(acc, _)| acc))
        .try_reduce(
            || vec![0u32; slots],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    Ok(ReplicateDegrees {
        k_values: cfg.k_values.clone(),
        n_a: users.len() as u64,
        degrees: degrees.chunks(nb).map(|c| c.to_vec()).collect(),
    })
}

/// Degree counts of B-points, pooled over replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeHistogram {
    pub k: u32,
    /// `counts[n]`: number of B-points with degree `n`.
    pub counts: Vec<u64>,
    pub total: u64,
    pub replicates: usize,
}

impl DegreeHistogram {
    pub fn new(k: u32) -> Self {
        DegreeHistogram {
            k,
            counts: Vec::new(),
            total: 0,
            replicates: 0,
        }
    }

    pub fn add(&mut self, degree: usize, times: u64) {
        if self.counts.len() <= degree {
            self.counts.resize(degree + 1, 0);
        }
        self.counts[degree] += times;
        self.total += times;
    }

    pub fn merge(&mut self, other: &DegreeHistogram) {
        for (n, &c) in other.counts.iter().enumerate() {
            if c > 0 {
                self.add(n, c);
            }
        }
        self.replicates += other.replicates;
    }

    pub fn pmf(&self) -> Vec<f64> {
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// Sum of degrees (edges).
    pub fn edges(&self) -> u128 {
        self.counts
            .iter()
            .enumerate()
            .map(|(n, &c)| n as u128 * c as u128)
            .sum()
    }

    /// Mean and population variance of the degree.
    pub fn moments(&self) -> SummaryStats {
        let (mut s1, mut s2) = (0u128, 0u128);
        for (n, &c) in self.counts.iter().enumerate() {
            s1 += n as u128 * c as u128;
            s2 += (n * n) as u128 * c as u128;
        }
        moments_from(self.total, s1, s2)
    }
}

fn moments_from(count: u64, s1: u128, s2: u128) -> SummaryStats {
    let n = count as f64;
    let mean = s1 as f64 / n;
    let var = (s2 as f64 / n - mean * mean).max(0.0);
    SummaryStats::new(mean, var)
}

/// Empirical statistics with jackknife (leave-one-replicate-out) errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub mean: f64,
    pub variance: f64,
    pub cv: f64,
    pub mean_se: f64,
    pub variance_se: f64,
    pub cv_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KResult {
    pub k: u32,
    pub histogram: DegreeHistogram,
    pub stats: EmpiricalStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub per_k: Vec<KResult>,
    /// Number of A-points in each replicate.
    pub users: Vec<u64>,
    /// B-point count in each replicate.
    pub stations: Vec<usize>,
}

impl ExperimentResult {
    pub fn get(&self, k: u32) -> Option<&KResult> {
        self.per_k.iter().find(|r| r.k == k)
    }

    /// CSV `k,mean,var,cv,cv_analytic`.
    pub fn write_summary_csv<W: Write>(&self, ak: &AkTable, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "mean", "var", "cv", "cv_analytic"])
            .map_err(csv_err)?;
        for r in &self.per_k {
            let cv_a = self.config.reference_law(r.k, ak)?.summary()?.cv;
            w.write_record([
                r.k.to_string(),
                fmt_f64(r.stats.mean),
                fmt_f64(r.stats.variance),
                fmt_f64(r.stats.cv),
                fmt_f64(cv_a),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
struct Sums {
    count: u64,
    s1: u128,
    s2: u128,
}

fn jackknife(per_rep: &[Sums], total: &Sums) -> (SummaryStats, [f64; 3]) {
    let full = moments_from(total.count, total.s1, total.s2);
    let r = per_rep.len();
    if r < 2 {
        return (full, [f64::NAN; 3]);
    }
    let loo: Vec<SummaryStats> = per_rep
        .iter()
        .map(|s| moments_from(total.count - s.count, total.s1 - s.s1, total.s2 - s.s2))
        .collect();
    let se = |f: &dyn Fn(&SummaryStats) -> f64| {
        let m = loo.iter().map(f).sum::<f64>() / r as f64;
        let ss: f64 = loo.iter().map(|s| (f(s) - m).powi(2)).sum();
        ((r as f64 - 1.0) / r as f64 * ss).sqrt()
    };
    (full, [se(&|s| s.mean), se(&|s| s.variance), se(&|s| s.cv)])
}

/// Runs all replicates (in parallel) and pools the histograms.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let fixed = match &cfg.layout {
        Layout::Poisson { .. } => None,
        _ => Some(cfg.b_points(0)?),
    };
    let outcomes: Vec<(usize, ReplicateDegrees)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<(usize, ReplicateDegrees)> {
                let owned;
                let b = match &fixed {
                    Some(b) => b,
                    None => {
                        owned = cfg.b_points(r)?;
                        &owned
                    }
                };
                Ok((b.len(), degrees_one_replicate(b, cfg, r)?))
            };
            run().map_err(|e| Error::Replicate {
                index: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut per_k = Vec::with_capacity(cfg.k_values.len());
    for (i, &k) in cfg.k_values.iter().enumerate() {
        let mut hist = DegreeHistogram::new(k);
        let mut sums = Vec::with_capacity(outcomes.len());
        let mut total = Sums::default();
        for (_, o) in &outcomes {
            let h = o.histogram(i);
            let m = Sums {
                count: h.total,
                s1: h.edges(),
                s2: h
                    .counts
                    .iter()
                    .enumerate()
                    .map(|(n, &c)| (n * n) as u128 * c as u128)
                    .sum(),
            };
            total.count += m.count;
            total.s1 += m.s1;
            total.s2 += m.s2;
            sums.push(m);
            hist.merge(&h);
        }
        let (s, [mean_se, variance_se, cv_se]) = jackknife(&sums, &total);
        per_k.push(KResult {
            k,
            histogram: hist,
            stats: EmpiricalStats {
                mean: s.mean,
                variance: s.variance,
                cv: s.cv,
                mean_se,
                variance_se,
                cv_se,
            },
        });
    }
    Ok(ExperimentResult {
        config: cfg.clone(),
        per_k,
        users: outcomes.iter().map(|(_, o)| o.n_a).collect(),
        stations: outcomes.iter().map(|(n, _)| *n).collect(),
    })
}

/// Empirical against analytic degree law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub tv: f64,
    pub ks: f64,
    pub empirical: SummaryStats,
    pub analytic: SummaryStats,
    /// Analytic probabilities aligned with the histogram's degrees, padded
    /// to the law's truncation point.
    pub analytic_pmf: Vec<f64>,
}

pub fn compare(hist: &DegreeHistogram, spec: &DistSpec) -> Result<DivergenceReport> {
    if hist.total == 0 {
        return Err(Error::Data("histogram is empty".into()));
    }
    if !spec.is_discrete() {
        return Err(Error::invalid("compare needs a degree law"));
    }
    let n_max = (hist.counts.len() as u64)
        .saturating_sub(1)
        .max(spec.truncation_point()?);
    let q: Vec<f64> = (0..=n_max).map(|n| spec.pmf(n)).collect::<Result<_>>()?;
    let p = hist.pmf();
    // Mass the truncated law leaves out counts fully towards the distance.
    let missing = (1.0 - q.iter().sum::<f64>()).max(0.0);
    Ok(DivergenceReport {
        tv: total_variation(&p, &q) + 0.5 * missing,
        ks: ks_discrete(&p, &q),
        empirical: hist.moments(),
        analytic: spec.summary()?,
        analytic_pmf: q,
    })
}

/// CSV `degree,count,empirical_p,analytic_p` over the union of supports.
pub fn write_histogram_csv<W: Write>(
    hist: &DegreeHistogram,
    spec: Option<&DistSpec>,
    out: W,
) -> Result<()> {
    let q = match spec {
        Some(s) => compare(hist, s)?.analytic_pmf,
        None => Vec::new(),
    };
    let n = hist.counts.len().max(q.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["degree", "count", "empirical_p", "analytic_p"])
        .map_err(csv_err)?;
    for d in 0..n {
        let c = hist.counts.get(d).copied().unwrap_or(0);
        let a = q.get(d).map(|v| fmt_f64(*v)).unwrap_or_default();
        w.write_record([
            d.to_string(),
            c.to_string(),
            fmt_f64(c as f64 / hist.total as f64),
            a,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

/// Reads a histogram CSV written by [`write_histogram_csv`] (only the
/// `degree` and `count` columns are used).
pub fn read_histogram_csv<R: std::io::Read>(k: u32, input: R) -> Result<DegreeHistogram> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("histogram CSV lacks a '{name}' column")))
    };
    let (dc, cc) = (col("degree")?, col("count")?);
    let mut h = DegreeHistogram::new(k);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize| -> Result<u64> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| Error::Data(format!("row {}: {e}", line + 2)))
        };
        let (d, c) = (parse(dc)?, parse(cc)?);
        h.add(d as usize, c);
    }
    h.replicates = 1;
    Ok(h)
}
