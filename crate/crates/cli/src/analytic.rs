use std::path::PathBuf;

use abgraph::analytic::{cdf_table, pmf_table, DistSpec, Family};
use abgraph::dataio::{load_ak_constants, AkSource, RunArtifacts};
use abgraph::experiment::{compare as divergence, read_histogram_csv};
use abgraph::fitting::AkTable;
use serde::{Deserialize, Serialize};

use crate::{csv_bytes, finish, json_bytes, out_dir, parse_domain, resolve, to_json, usage, CliResult};

/// Parameters shared by `analytic` and `compare`.
#[derive(Debug, Clone, Default, Serialize)]
struct LawParams {
    family: Option<String>,
    lambda_a: Option<f64>,
    lambda_b: Option<f64>,
    lambda: Option<f64>,
    shape: Option<f64>,
    ak: Option<String>,
    n: Option<usize>,
    extent: Option<String>,
    spacing: Option<f64>,
}

impl LawParams {
    fn family(&self) -> CliResult<Family> {
        Ok(self
            .family
            .as_deref()
            .ok_or_else(|| usage("--family is required"))?
            .parse()?)
    }

    fn ak(&self) -> CliResult<AkTable> {
        let src: AkSource = self.ak.as_deref().unwrap_or("builtin").parse()?;
        Ok(load_ak_constants(&src)?)
    }

    fn build(&self, k: u32, ak: &AkTable) -> CliResult<DistSpec> {
        let need = |v: Option<f64>, flag: &str| {
            v.ok_or_else(|| usage(format!("--{flag} is required for this family")))
        };
        let shape = || -> CliResult<f64> {
            match self.shape {
                Some(s) => Ok(s),
                None => Ok(ak.shape_for(k)?),
            }
        };
        let spec = match self.family()? {
            Family::PoissonDegree => {
                let la = need(self.lambda_a, "lambda-a")?;
                match (self.spacing, self.n, &self.extent) {
                    (Some(d), _, _) => DistSpec::line_grid(la, k, d)?,
                    (None, Some(n), Some(ext)) => {
                        let area = parse_domain(ext, "torus")?.total_measure();
                        DistSpec::hex_2d(la, k, area, n)?
                    }
                    _ => {
                        return Err(usage(
                            "family poisson needs --spacing (line grid) or --n with --extent (hex grid)",
                        ))
                    }
                }
            }
            Family::CompoundPoissonErlang => {
                DistSpec::cpe(need(self.lambda_a, "lambda-a")?, need(self.lambda_b, "lambda-b")?, k)?
            }
            Family::CompoundPoissonGamma => {
                let lambda = match self.lambda {
                    Some(l) => l,
                    None => need(self.lambda_a, "lambda (or --lambda-a)")?
                        / need(self.lambda_b, "lambda (or --lambda-b)")?,
                };
                DistSpec::cpg(lambda, k, shape()?)?
            }
            Family::GammaArea => DistSpec::GammaArea { k, shape: shape()? },
            Family::ErlangArea => DistSpec::ErlangArea {
                k,
                lambda_b: need(self.lambda_b, "lambda-b")?,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

macro_rules! law_args {
    ($(#[$m:meta])* pub struct $name:ident { $($extra:tt)* }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            /// JSON file with any of these options (snake_case keys); flags win.
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            config: Option<PathBuf>,

            /// Law: poisson (grid degree), cpe, cpg, gamma (unit-mean area) or erlang (1D area).
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            family: Option<String>,

            /// A-point (user) density lambda_A [points per m², or per m in 1D].
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            lambda_a: Option<f64>,

            /// B-point (station) density lambda_B [points per m², or per m in 1D].
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            lambda_b: Option<f64>,

            /// Density ratio lambda_A / lambda_B for cpg [dimensionless].
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            lambda: Option<f64>,

            /// Gamma shape a_k overriding the constants table [dimensionless].
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            shape: Option<f64>,

            /// a_k constants: "builtin" or a CSV file with columns k,a_k [default: builtin].
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            ak: Option<String>,

            /// Station count of a hex grid [dimensionless count].
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            n: Option<usize>,

            /// Extent of the hex grid window: WxH [m].
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            extent: Option<String>,

            /// Station spacing of a line grid [m].
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            spacing: Option<f64>,

            /// Output directory [default: abgraph-out].
            #[arg(long)]
            #[serde(skip_serializing_if = "Option::is_none")]
            out: Option<PathBuf>,

            $($extra)*
        }

        impl $name {
            fn law(&self) -> LawParams {
                LawParams {
                    family: self.family.clone(),
                    lambda_a: self.lambda_a,
                    lambda_b: self.lambda_b,
                    lambda: self.lambda,
                    shape: self.shape,
                    ak: self.ak.clone(),
                    n: self.n,
                    extent: self.extent.clone(),
                    spacing: self.spacing,
                }
            }
        }
    };
}

law_args! {
    pub struct Args {
        /// Orders to tabulate [dimensionless list, default: 1].
        #[arg(long, value_delimiter = ',')]
        #[serde(skip_serializing_if = "Option::is_none")]
        k: Option<Vec<u32>>,

        /// Last degree of a pmf table [dimensionless, default: the truncation point].
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        nmax: Option<u64>,

        /// Largest abscissa of an area CDF grid [same units as the law, default: mean + 10 sd].
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        grid_max: Option<f64>,

        /// Points of an area CDF grid [dimensionless count, default: 1001].
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        grid_points: Option<usize>,

        /// Also write the c_V curve for k = 1..K [dimensionless].
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        cv_kmax: Option<u32>,
    }
}

law_args! {
    pub struct CompareArgs {
        /// Histogram CSV with columns degree,count (as written by simulate).
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        hist: Option<PathBuf>,

        /// Connectivity k of the histogram [dimensionless].
        #[arg(long)]
        #[serde(skip_serializing_if = "Option::is_none")]
        k: Option<u32>,
    }
}

fn summary_csv(rows: &[(u32, DistSpec)]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| usage(e.to_string());
    w.write_record(["k", "mean", "variance", "cv"]).map_err(err)?;
    for (k, spec) in rows {
        let s = spec.summary()?;
        w.write_record([k.to_string(), s.mean.to_string(), s.variance.to_string(), s.cv.to_string()])
            .map_err(err)?;
    }
    w.into_inner().map_err(|e| usage(e.to_string()))
}

pub fn run(flags: Args) -> CliResult<()> {
    let a = resolve(&flags, flags.config.as_deref())?;
    let law = a.law();
    let ak = law.ak()?;
    let ks = a.k.clone().unwrap_or_else(|| vec![1]);
    if ks.is_empty() || ks.contains(&0) {
        return Err(usage("--k must list orders >= 1"));
    }
    let specs: Vec<(u32, DistSpec)> = ks
        .iter()
        .map(|&k| law.build(k, &ak).map(|s| (k, s)))
        .collect::<CliResult<_>>()?;
    let config = serde_json::json!({"law": law, "k": ks, "nmax": a.nmax, "grid_max": a.grid_max,
        "grid_points": a.grid_points, "cv_kmax": a.cv_kmax, "specs": specs});
    let mut run = RunArtifacts::new("analytic", config, None);
    for (k, spec) in &specs {
        if spec.is_discrete() {
            let n_max = match a.nmax {
                Some(n) => n,
                None => spec.truncation_point()?,
            };
            let table = pmf_table(spec, n_max)?;
            run.add(
                format!("pmf_k{k}.csv"),
                csv_bytes(|b| table.write_csv(b))?,
                serde_json::json!({"spec": spec, "columns": "n,p", "tail_mass": table.tail_mass}),
            );
        } else {
            let s = spec.summary()?;
            let x_max = a.grid_max.unwrap_or(s.mean + 10.0 * s.variance.sqrt());
            let m = a.grid_points.unwrap_or(1001).max(2);
            let grid: Vec<f64> = (0..m).map(|i| x_max * i as f64 / (m - 1) as f64).collect();
            let rows = cdf_table(spec, &grid)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["x", "F"]).map_err(|e| usage(e.to_string()))?;
            for (x, f) in rows {
                w.write_record([x.to_string(), f.to_string()]).map_err(|e| usage(e.to_string()))?;
            }
            run.add(
                format!("cdf_k{k}.csv"),
                w.into_inner().map_err(|e| usage(e.to_string()))?,
                serde_json::json!({"spec": spec, "columns": "x,F"}),
            );
        }
    }
    run.add("summary.csv", summary_csv(&specs)?, serde_json::json!({"columns": "k,mean,variance,cv"}));
    if let Some(kmax) = a.cv_kmax {
        let curve: Vec<(u32, DistSpec)> = (1..=kmax)
            .map(|k| law.build(k, &ak).map(|s| (k, s)))
            .collect::<CliResult<_>>()?;
        run.add("cv.csv", summary_csv(&curve)?, serde_json::json!({"columns": "k,mean,variance,cv"}));
    }
    finish(&run, &out_dir(&a.out))
}

pub fn compare(flags: CompareArgs) -> CliResult<()> {
    let a = resolve(&flags, flags.config.as_deref())?;
    let law = a.law();
    let path = a.hist.clone().ok_or_else(|| usage("--hist is required"))?;
    let k = a.k.ok_or_else(|| usage("--k is required"))?;
    let spec = law.build(k, &law.ak()?)?;
    let file = std::fs::File::open(&path).map_err(|e| abgraph::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let hist = read_histogram_csv(k, file)?;
    let report = divergence(&hist, &spec)?;
    println!(
        "k={k} tv={:.6} ks={:.6} mean={:.4}/{:.4} cv={:.4}/{:.4}",
        report.tv, report.ks, report.empirical.mean, report.analytic.mean, report.empirical.cv, report.analytic.cv
    );
    let config = serde_json::json!({"hist": path, "k": k, "law": law, "spec": spec});
    let mut run = RunArtifacts::new("compare", config, None);
    run.add(
        "report.json",
        json_bytes(&serde_json::json!({"k": k, "spec": spec, "report": report})),
        to_json(&serde_json::json!({"k": k})),
    );
    finish(&run, &out_dir(&a.out))
}
