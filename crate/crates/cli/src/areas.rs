use std::path::PathBuf;

use abgraph::areas::{
    area_samples_guarded, ecdf_at, estimate_areas_2d, exact_areas_1d, Normalization,
    OrderSelector,
};
use abgraph::dataio::{read_pointset, RunArtifacts};
use abgraph::knn::build_index;
use serde::{Deserialize, Serialize};

use crate::{csv_bytes, finish, out_dir, resolve, to_json, usage, CliResult};

#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Args {
    /// JSON file with any of these options (snake_case keys); flags win.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<PathBuf>,

    /// Point set CSV written by `generate` or `ingest` (with its .meta.json).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<PathBuf>,

    /// Highest order k [dimensionless, default: 5].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k_max: Option<usize>,

    /// Sampling pitch of the 2D lattice [m, default: sqrt(0.01 * A_tot / N)].
    /// Ignored on segments, whose areas are exact.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,

    /// Guard band on clipped domains: skip points closer than this to the
    /// boundary when building CDFs [m, default: 0].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,

    /// Orders whose cumulative CDF to tabulate [dimensionless list, default: 1..k-max].
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    ks: Option<Vec<usize>>,

    /// Largest abscissa of the CDF grid [in units of the mean cell, default: 3 * k-max].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_max: Option<f64>,

    /// Step of the CDF grid [in units of the mean cell, default: 0.01].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_step: Option<f64>,

    /// Output directory [default: abgraph-out].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    points: PathBuf,
    k_max: usize,
    method: &'static str,
    epsilon: Option<f64>,
    margin: f64,
    ks: Vec<usize>,
    grid_max: f64,
    grid_step: f64,
}

pub fn run(flags: Args) -> CliResult<()> {
    let a = resolve(&flags, flags.config.as_deref())?;
    let path = a.points.clone().ok_or_else(|| usage("--points is required"))?;
    let points = read_pointset(&path)?;
    let k_max = a.k_max.unwrap_or(5);
    let one_d = points.domain().dim() == 1;
    let epsilon = if one_d {
        None
    } else {
        Some(a.epsilon.unwrap_or_else(|| {
            (0.01 * points.domain().total_measure() / points.len().max(1) as f64).sqrt()
        }))
    };
    let r = Resolved {
        points: path,
        k_max,
        method: if one_d { "exact" } else { "lattice" },
        epsilon,
        margin: a.margin.unwrap_or(0.0),
        ks: a.ks.clone().unwrap_or_else(|| (1..=k_max).collect()),
        grid_max: a.grid_max.unwrap_or(3.0 * k_max as f64),
        grid_step: a.grid_step.unwrap_or(0.01),
    };
    if !(r.grid_step > 0.0 && r.grid_max > 0.0) {
        return Err(usage("--grid-max and --grid-step must be > 0"));
    }
    let table = match epsilon {
        None => exact_areas_1d(&points, k_max)?,
        Some(eps) => estimate_areas_2d(&points, k_max, eps, &build_index(&points)?)?,
    };
    let steps = (r.grid_max / r.grid_step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * r.grid_step).collect();

    let mut ecdf = csv::Writer::from_writer(Vec::new());
    ecdf.write_record(["x", "k", "ecdf"]).map_err(|e| usage(e.to_string()))?;
    for &k in &r.ks {
        let s = area_samples_guarded(
            &table,
            OrderSelector::Cumulative(k),
            Normalization::UnitMean,
            r.margin,
        )?;
        if s.is_empty() {
            return Err(abgraph::Error::Data("the guard band excludes every point".into()).into());
        }
        for (x, f) in grid.iter().zip(ecdf_at(&s, &grid)) {
            ecdf.write_record([x.to_string(), k.to_string(), f.to_string()])
                .map_err(|e| usage(e.to_string()))?;
        }
    }
    let ecdf = ecdf.into_inner().map_err(|e| usage(e.to_string()))?;

    let mut run = RunArtifacts::new("areas", to_json(&r), points.seed());
    run.add(
        "areas.csv",
        csv_bytes(|b| table.write_csv(b))?,
        serde_json::json!({"columns": "point_id,order,area", "units": "m or m^2", "resolution": table.resolution()}),
    );
    run.add(
        "ecdf.csv",
        ecdf,
        serde_json::json!({"columns": "x,k,ecdf", "x_units": "mean cell size A_tot/N", "margin": r.margin}),
    );
    finish(&run, &out_dir(&a.out))
}
