//! Closed-form degree and area laws.
//!
//! A station's degree is Poisson given the area `x` of its order-`<= k`
//! region, with mean `lambda_A * x`. Mixing over the area law gives:
//!
//! | family | area law | degree law |
//! |---|---|---|
//! | `poisson_degree` | constant (grids) | `Poisson(mu)` |
//! | `compound_poisson_erlang` | `Erlang(2k, 2 lambda_B)` (1D Poisson) | negative binomial, size `2k` |
//! | `compound_poisson_gamma` | `Gamma(a_k, a_k / k)` in units of `1 / lambda_B` (2D Poisson) | negative binomial, size `a_k` |
//!
//! All mass functions are evaluated in log space.

use serde::{Deserialize, Serialize};

use crate::special::{gamma_p, gamma_pdf, ln_gamma};
use crate::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PoissonDegree,
    CompoundPoissonErlang,
    CompoundPoissonGamma,
    GammaArea,
    ErlangArea,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "poisson" | "poisson_degree" => Ok(Family::PoissonDegree),
            "cpe" | "compound_poisson_erlang" => Ok(Family::CompoundPoissonErlang),
            "cpg" | "compound_poisson_gamma" => Ok(Family::CompoundPoissonGamma),
            "gamma" | "gamma_area" => Ok(Family::GammaArea),
            "erlang" | "erlang_area" => Ok(Family::ErlangArea),
            other => Err(Error::invalid(format!(
                "unknown family '{other}' (expected poisson, cpe, cpg, gamma_area or erlang_area)"
            ))),
        }
    }
}

/// A fully parameterized law.
///
/// Densities are in points per unit measure; `lambda` is the dimensionless
/// ratio `lambda_A / lambda_B`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistSpec {
    /// Degree on a regular grid: `Poisson(mean)`.
    PoissonDegree { mean: f64 },
    /// Degree for 1D Poisson stations.
    CompoundPoissonErlang { lambda_a: f64, lambda_b: f64, k: u32 },
    /// Degree for 2D Poisson stations with fitted area shape `shape = a_k`.
    CompoundPoissonGamma { lambda: f64, k: u32, shape: f64 },
    /// Unit-mean-normalized `X_{<=k}`: shape `a_k`, rate `a_k / k`.
    GammaArea { k: u32, shape: f64 },
    /// 1D `X_{<=k}`: shape `2k`, rate `2 lambda_B`.
    ErlangArea { k: u32, lambda_b: f64 },
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub variance: f64,
    pub cv: f64,
}

impl SummaryStats {
    pub fn new(mean: f64, variance: f64) -> Self {
        SummaryStats {
            mean,
            variance,
            cv: variance.sqrt() / mean,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn order(k: u32) -> Result<()> {
    if k >= 1 {
        Ok(())
    } else {
        Err(Error::invalid("k must be >= 1"))
    }
}

impl DistSpec {
    /// Hexagonal grid: mean `lambda_A * k * A_tot / N`.
    pub fn hex_2d(lambda_a: f64, k: u32, a_tot: f64, n: usize) -> Result<Self> {
        positive("lambda_A", lambda_a)?;
        positive("A_tot", a_tot)?;
        order(k)?;
        if n == 0 {
            return Err(Error::invalid("N must be >= 1"));
        }
        Ok(DistSpec::PoissonDegree {
            mean: lambda_a * k as f64 * a_tot / n as f64,
        })
    }

    /// Equally spaced line: mean `lambda_A * k * d`.
    pub fn line_grid(lambda_a: f64, k: u32, spacing: f64) -> Result<Self> {
        positive("lambda_A", lambda_a)?;
        positive("spacing", spacing)?;
        order(k)?;
        Ok(DistSpec::PoissonDegree {
            mean: lambda_a * k as f64 * spacing,
        })
    }

    pub fn cpe(lambda_a: f64, lambda_b: f64, k: u32) -> Result<Self> {
        let s = DistSpec::CompoundPoissonErlang {
            lambda_a,
            lambda_b,
            k,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn cpg(lambda: f64, k: u32, shape: f64) -> Result<Self> {
        let s = DistSpec::CompoundPoissonGamma { lambda, k, shape };
        s.validate()?;
        Ok(s)
    }

    pub fn family(&self) -> Family {
        match self {
            DistSpec::PoissonDegree { .. } => Family::PoissonDegree,
            DistSpec::CompoundPoissonErlang { .. } => Family::CompoundPoissonErlang,
            DistSpec::CompoundPoissonGamma { .. } => Family::CompoundPoissonGamma,
            DistSpec::GammaArea { .. } => Family::GammaArea,
            DistSpec::ErlangArea { .. } => Family::ErlangArea,
        }
    }

    /// True for the degree families (integer support).
    pub fn is_discrete(&self) -> bool {
        matches!(
            self.family(),
            Family::PoissonDegree | Family::CompoundPoissonErlang | Family::CompoundPoissonGamma
        )
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DistSpec::PoissonDegree { mean } => {
                if mean.is_finite() && mean >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("Poisson mean must be >= 0, got {mean}")))
                }
            }
            DistSpec::CompoundPoissonErlang {
                lambda_a,
                lambda_b,
                k,
            } => {
                positive("lambda_A", lambda_a)?;
                positive("lambda_B", lambda_b)?;
                order(k)
            }
            DistSpec::CompoundPoissonGamma { lambda, k, shape } => {
                positive("lambda", lambda)?;
                positive("a_k", shape)?;
                order(k)
            }
            DistSpec::GammaArea { k, shape } => {
                positive("a_k", shape)?;
                order(k)
            }
            DistSpec::ErlangArea { k, lambda_b } => {
                positive("lambda_B", lambda_b)?;
                order(k)
            }
        }
    }

    /// Probability of degree `n`. Errors for area families.
    pub fn pmf(&self, n: u64) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            DistSpec::PoissonDegree { mean } => poisson_ln_pmf(n, mean).exp(),
            DistSpec::CompoundPoissonErlang {
                lambda_a,
                lambda_b,
                k,
            } => {
                let size = 2.0 * k as f64;
                let mean = k as f64 * lambda_a / lambda_b;
                negbin_ln_pmf(n, size, mean).exp()
            }
            DistSpec::CompoundPoissonGamma { lambda, k, shape } => {
                negbin_ln_pmf(n, shape, k as f64 * lambda).exp()
            }
            DistSpec::GammaArea { .. } | DistSpec::ErlangArea { .. } => {
                return Err(Error::invalid("area laws have a density, not a pmf"))
            }
        })
    }

    /// `(shape, rate)` of an area law.
    fn gamma_params(&self) -> Result<(f64, f64)> {
        self.validate()?;
        match *self {
            DistSpec::GammaArea { k, shape } => Ok((shape, shape / k as f64)),
            DistSpec::ErlangArea { k, lambda_b } => Ok((2.0 * k as f64, 2.0 * lambda_b)),
            _ => Err(Error::invalid("degree laws have a pmf, not a density")),
        }
    }

    /// Density and CDF of an area law at `x >= 0`.
    pub fn pdf_cdf(&self, x: f64) -> Result<(f64, f64)> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::invalid(format!("area must be >= 0, got {x}")));
        }
        let (shape, rate) = self.gamma_params()?;
        Ok((gamma_pdf(shape, rate, x), gamma_p(shape, rate * x)))
    }

    /// Closed-form mean, variance and coefficient of variation.
    pub fn summary(&self) -> Result<SummaryStats> {
        self.validate()?;
        let (mean, var) = match *self {
            DistSpec::PoissonDegree { mean } => (mean, mean),
            DistSpec::CompoundPoissonErlang {
                lambda_a,
                lambda_b,
                k,
            } => {
                let l = lambda_a / lambda_b;
                let k = k as f64;
                (k * l, k * l + k * l * l / 2.0)
            }
            DistSpec::CompoundPoissonGamma { lambda, k, shape } => {
                let m = k as f64 * lambda;
                (m, m + m * m / shape)
            }
            DistSpec::GammaArea { k, shape } => {
                let k = k as f64;
                (k, k * k / shape)
            }
            DistSpec::ErlangArea { k, lambda_b } => {
                let k = k as f64;
                (k / lambda_b, 2.0 * k / (4.0 * lambda_b * lambda_b))
            }
        };
        Ok(SummaryStats::new(mean, var))
    }

    /// Smallest `n` at which tabulation may stop: the cumulative mass reaches
    /// `1 - 1e-9` or `n` exceeds mean + 20 standard deviations.
    pub fn truncation_point(&self) -> Result<u64> {
        let s = self.summary()?;
        let cap = (s.mean + 20.0 * s.variance.sqrt()).ceil().max(1.0) as u64;
        let mut acc = 0.0;
        for n in 0..=cap {
            acc += self.pmf(n)?;
            if acc >= 1.0 - 1e-9 {
                return Ok(n);
            }
        }
        Ok(cap)
    }

    /// Probabilities for `0..=truncation_point()`.
    pub fn pmf_vector(&self) -> Result<Vec<f64>> {
        let n_max = self.truncation_point()?;
        (0..=n_max).map(|n| self.pmf(n)).collect()
    }
}

/// `ln(Gamma(a + n) / Gamma(a))`, summed directly for small `n` so that huge
/// `a` keeps full precision.
fn ln_rising(a: f64, n: u64) -> f64 {
    if n <= 64 {
        (0..n).map(|i| (a + i as f64).ln()).sum()
    } else {
        ln_gamma(a + n as f64) - ln_gamma(a)
    }
}

fn ln_factorial(n: u64) -> f64 {
    crate::special::ln_factorial(n)
}

fn poisson_ln_pmf(n: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -mean + n as f64 * mean.ln() - ln_factorial(n)
}

/// Negative binomial with real `size` and the given mean: the Poisson-gamma
/// mixture with gamma shape `size`.
fn negbin_ln_pmf(n: u64, size: f64, mean: f64) -> f64 {
    let nf = n as f64;
    // size * ln(size / (mean + size)) and n * ln(mean / (mean + size))
    let a = -size * (mean / size).ln_1p();
    let b = if n == 0 {
        0.0
    } else {
        nf * (mean.ln() - (mean + size).ln())
    };
    ln_rising(size, n) - ln_factorial(n) + a + b
}

fn expect(spec: &DistSpec, family: Family) -> Result<()> {
    if spec.family() == family {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "expected a {family:?} spec, got {:?}",
            spec.family()
        )))
    }
}

/// `P(D = n)` for a grid layout.
pub fn poisson_degree_pmf(n: u64, spec: &DistSpec) -> Result<f64> {
    expect(spec, Family::PoissonDegree)?;
    spec.pmf(n)
}

/// `P(D = n)` for 1D Poisson stations.
pub fn cpe_pmf(n: u64, spec: &DistSpec) -> Result<f64> {
    expect(spec, Family::CompoundPoissonErlang)?;
    spec.pmf(n)
}

/// `P(D = n)` for 2D Poisson stations.
pub fn cpg_pmf(n: u64, spec: &DistSpec) -> Result<f64> {
    expect(spec, Family::CompoundPoissonGamma)?;
    spec.pmf(n)
}

/// Density and CDF of the unit-mean gamma area law.
pub fn gamma_area_pdf_cdf(x: f64, spec: &DistSpec) -> Result<(f64, f64)> {
    expect(spec, Family::GammaArea)?;
    spec.pdf_cdf(x)
}

/// Density of the 1D Erlang area law.
pub fn erlang_area_pdf(x: f64, spec: &DistSpec) -> Result<f64> {
    expect(spec, Family::ErlangArea)?;
    Ok(spec.pdf_cdf(x)?.0)
}

pub fn coefficient_of_variation(spec: &DistSpec) -> Result<SummaryStats> {
    spec.summary()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmfTable {
    pub rows: Vec<(u64, f64)>,
    /// `1 - sum(rows)`, clamped at 0.
    pub tail_mass: f64,
}

impl PmfTable {
    /// CSV `n,p`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "p"]).map_err(crate::areas::csv_err)?;
        for (n, p) in &self.rows {
            w.write_record([n.to_string(), crate::areas::fmt_f64(*p)])
                .map_err(crate::areas::csv_err)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }
}

pub fn pmf_table(spec: &DistSpec, n_max: u64) -> Result<PmfTable> {
    let rows: Vec<(u64, f64)> = (0..=n_max)
        .map(|n| spec.pmf(n).map(|p| (n, p)))
        .collect::<Result<_>>()?;
    let total: f64 = rows.iter().map(|r| r.1).sum();
    Ok(PmfTable {
        rows,
        tail_mass: (1.0 - total).max(0.0),
    })
}

/// `(x, F(x))` rows of an area law on `grid`.
pub fn cdf_table(spec: &DistSpec, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&x| spec.pdf_cdf(x).map(|(_, f)| (x, f)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cpe_small_values() {
        let s = DistSpec::cpe(1.0, 1.0, 1).unwrap();
        for n in 0..30u64 {
            let want = (n + 1) as f64 * 4.0 / 3f64.powi(n as i32 + 2);
            assert!(close(cpe_pmf(n, &s).unwrap(), want, 1e-15));
        }
        let t = pmf_table(&s, 2).unwrap();
        assert!(close(t.rows[0].1, 4.0 / 9.0, 1e-15));
        assert!(close(t.rows[1].1, 8.0 / 27.0, 1e-15));
        assert!(close(t.rows[2].1, 12.0 / 81.0, 1e-15));
    }

    #[test]
    fn poisson_table_and_limits() {
        let t = pmf_table(&DistSpec::PoissonDegree { mean: 1.0 }, 0).unwrap();
        assert!(close(t.rows[0].1, (-1f64).exp(), 1e-15));
        assert!(close(t.tail_mass, 1.0 - (-1f64).exp(), 1e-15));
        let zero = DistSpec::PoissonDegree { mean: 0.0 };
        assert_eq!(zero.pmf(0).unwrap(), 1.0);
        assert_eq!(zero.pmf(3).unwrap(), 0.0);
    }

    #[test]
    fn hex_geometry_mean_and_cv() {
        let s = DistSpec::hex_2d(0.1, 5, 9.0e6, 22785).unwrap();
        let st = s.summary().unwrap();
        assert!(close(st.mean, 197.498, 1e-3));
        let s1 = DistSpec::PoissonDegree { mean: 197.5 };
        assert!(close(s1.summary().unwrap().cv, 0.07116, 1e-5));
    }

    #[test]
    fn line_grid_mean_uses_density() {
        let s = DistSpec::line_grid(2.0, 3, 0.5).unwrap();
        assert_eq!(s, DistSpec::PoissonDegree { mean: 3.0 });
    }

    #[test]
    fn cv_closed_forms() {
        let e = DistSpec::cpe(10.0, 1.0, 1).unwrap().summary().unwrap();
        assert!(close(e.cv, 0.6f64.sqrt(), 1e-12));
        let g = DistSpec::cpg(10.0, 1, 3.53).unwrap().summary().unwrap();
        assert!(close(g.mean, 10.0, 1e-12));
        assert!(close(g.variance, 10.0 + 100.0 / 3.53, 1e-9));
        let big = DistSpec::cpg(2.0, 3, 1e12).unwrap().summary().unwrap();
        assert!(close(big.cv, 1.0 / 6f64.sqrt(), 1e-6));
    }

    #[test]
    fn large_shape_collapses_to_poisson() {
        let g = DistSpec::cpg(2.0, 3, 1e8).unwrap();
        let p = DistSpec::PoissonDegree { mean: 6.0 };
        for n in 0..=20 {
            assert!(close(g.pmf(n).unwrap(), p.pmf(n).unwrap(), 1e-4));
        }
    }

    #[test]
    fn pmfs_normalize_and_match_means() {
        let specs = [
            DistSpec::PoissonDegree { mean: 37.2 },
            DistSpec::cpe(0.3, 1.1, 4).unwrap(),
            DistSpec::cpe(10.0, 1.0, 50).unwrap(),
            DistSpec::cpg(10.0, 5, 21.17).unwrap(),
            DistSpec::cpg(0.1, 1, 3.53).unwrap(),
        ];
        for s in specs {
            let v = s.pmf_vector().unwrap();
            let total: f64 = v.iter().sum();
            assert!(total >= 1.0 - 1e-9 && total <= 1.0 + 1e-12, "{s:?}: {total}");
            let mean: f64 = v.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
            let want = s.summary().unwrap().mean;
            assert!(((mean - want) / want).abs() < 1e-7, "{s:?}: {mean} vs {want}");
        }
    }

    #[test]
    fn no_overflow_far_in_the_tail() {
        let s = DistSpec::PoissonDegree { mean: 1000.0 };
        let p = s.pmf(10_000).unwrap();
        assert!(p.is_finite() && p >= 0.0);
        let c = DistSpec::cpg(100.0, 10, 40.0).unwrap();
        assert!(c.pmf(10_000).unwrap().is_finite());
    }

    #[test]
    fn area_laws() {
        let g = DistSpec::GammaArea { k: 1, shape: 3.5 };
        for x in [0.5f64, 1.0, 2.0] {
            let direct = 3.5f64.powf(3.5) / ln_gamma(3.5).exp() * x.powf(2.5) * (-3.5 * x).exp();
            let (pdf, _) = gamma_area_pdf_cdf(x, &g).unwrap();
            assert!(close(pdf, direct, 1e-12));
        }
        assert_eq!(g.pdf_cdf(0.0).unwrap().1, 0.0);
        assert!(g.pdf_cdf(-1.0).is_err());
        let g5 = DistSpec::GammaArea { k: 5, shape: 21.17 };
        let (_, median_cdf) = g5.pdf_cdf(5.0).unwrap();
        assert!((median_cdf - 0.5).abs() < 0.05);
        let e = DistSpec::ErlangArea { k: 1, lambda_b: 1.0 };
        assert_eq!(erlang_area_pdf(0.0, &e).unwrap(), 0.0);
        let at = |x: f64| erlang_area_pdf(x, &e).unwrap();
        assert!(at(0.5) > at(0.49) && at(0.5) > at(0.51));
    }

    #[test]
    fn family_mismatch_is_rejected() {
        let s = DistSpec::PoissonDegree { mean: 1.0 };
        assert!(cpe_pmf(0, &s).is_err());
        assert!(s.pdf_cdf(1.0).is_err());
        assert!(DistSpec::GammaArea { k: 1, shape: 2.0 }.pmf(0).is_err());
        assert!(DistSpec::cpe(-1.0, 1.0, 1).is_err());
        assert!("cpg".parse::<Family>().is_ok());
        assert!("nope".parse::<Family>().is_err());
    }
}
