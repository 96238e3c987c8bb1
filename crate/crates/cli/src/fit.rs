use std::path::{Path, PathBuf};

use abgraph::dataio::RunArtifacts;
use abgraph::fitting::{fit_ak_with, table1_pipeline, AkTable, FitOptions, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::{csv_bytes, finish, json_bytes, out_dir, resolve, usage, CliResult};

/// Iterations of a `--pilot` run (100 layouts of 100 points: 10^4 samples per k).
pub const PILOT_ITERATIONS: u64 = 100;

#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Args {
    /// JSON file with any of these options (snake_case keys); flags win.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<PathBuf>,

    /// Orders to fit [dimensionless list, default: 1,2,3,4,5].
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<Vec<u32>>,

    /// Quick pilot run with 100 iterations unless --iterations is given.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pilot: Option<bool>,

    /// Independent layouts to pool [dimensionless count, default: 10000].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<u64>,

    /// Uniform points per layout on a torus of unit mean cell size [count, default: 100].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_points: Option<usize>,

    /// Squared sampling pitch [in units of the mean cell size, default: 0.1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon_sq: Option<f64>,

    /// Requested equiprobable chi-square bins [dimensionless, default: 100].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<usize>,

    /// Master random seed [dimensionless, default: 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,

    /// Fit these unit-mean samples instead of running the pipeline: a CSV
    /// whose first column holds X_{<=k} / (A_tot / N) [dimensionless].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<PathBuf>,

    /// Spacing of quantized input samples [same units as the samples].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    quantum: Option<f64>,

    /// Output directory [default: abgraph-out].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

fn read_samples(path: &Path) -> CliResult<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| abgraph::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let parse_err = |line: u64, message: String| abgraph::Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let rec = rec.map_err(|e| parse_err(0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let v = rec.get(0).unwrap_or("").trim();
        out.push(
            v.parse::<f64>()
                .map_err(|_| parse_err(line, format!("'{v}' is not a number")))?,
        );
    }
    Ok(out)
}

pub fn run(flags: Args) -> CliResult<()> {
    let a = resolve(&flags, flags.config.as_deref())?;
    let ks = a.k.clone().unwrap_or_else(|| vec![1, 2, 3, 4, 5]);
    if ks.is_empty() || ks.contains(&0) {
        return Err(usage("--k must list orders >= 1"));
    }
    let bins = a.bins.unwrap_or(100);
    let (fits, config, seed) = match &a.samples {
        Some(path) => {
            let [k] = ks.as_slice() else {
                return Err(usage("--samples fits exactly one --k"));
            };
            let s = read_samples(path)?;
            let fit = fit_ak_with(&s, *k, &FitOptions { bins, quantum: a.quantum })?;
            let config = serde_json::json!({"samples": path, "k": k, "bins": bins, "quantum": a.quantum});
            (vec![fit], config, None)
        }
        None => {
            let pilot = a.pilot.unwrap_or(false);
            let cfg = PipelineConfig {
                n_points: a.n_points.unwrap_or(100),
                iterations: a
                    .iterations
                    .unwrap_or(if pilot { PILOT_ITERATIONS } else { 10_000 }),
                epsilon_sq: a.epsilon_sq.unwrap_or(0.1),
                k_max: *ks.iter().max().expect("non-empty"),
                seed: a.seed.unwrap_or(1),
                bins,
            };
            let fits = table1_pipeline(&cfg)?
                .into_iter()
                .filter(|f| ks.contains(&f.k))
                .collect();
            let config = serde_json::json!({"pipeline": cfg, "k": ks, "pilot": pilot});
            (fits, config, Some(cfg.seed))
        }
    };
    let mut run = RunArtifacts::new("fit", config, seed);
    for f in &fits {
        log::info!("k = {}: a_k = {:.4}, chi2 = {:.2} on {} dof", f.k, f.a_k, f.chi2, f.dof);
        println!("k={} a_k={:.4} chi2={:.2} dof={} n={}", f.k, f.a_k, f.chi2, f.dof, f.sample_size);
        run.add(format!("fit_k{}.json", f.k), json_bytes(f), serde_json::json!({"k": f.k}));
    }
    let table = AkTable::from_fits(&fits)?;
    run.add(
        "ak.csv",
        csv_bytes(|b| table.write_csv(b))?,
        serde_json::json!({"columns": "k,a_k"}),
    );
    finish(&run, &out_dir(&a.out))
}

