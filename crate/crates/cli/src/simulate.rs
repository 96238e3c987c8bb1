use std::path::PathBuf;

use abgraph::dataio::{load_ak_constants, read_pointset, AkSource, RunArtifacts};
use abgraph::experiment::{run_experiment, write_histogram_csv, ExperimentConfig, Layout};
use abgraph::geometry::HexGridSpec;
use abgraph::knn::ShadowConfig;
use serde::{Deserialize, Serialize};

use crate::{csv_bytes, finish, json_bytes, out_dir, parse_domain, resolve, to_json, usage, CliResult};

#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Args {
    /// JSON file with any of these options (snake_case keys); flags win.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<PathBuf>,

    /// B-point layout: hex, poisson, line-grid or stations [default: poisson].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    layout: Option<String>,

    /// Connectivities k [dimensionless list, default: 1,5,50].
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<Vec<u32>>,

    /// A-point (user) density lambda_A [points per m², or per m in 1D, default: 0.1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_a: Option<f64>,

    /// B-point density lambda_B of the poisson layout [points per m², or per m in 1D, default: 0.01].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_b: Option<f64>,

    /// Station count of the hex layout [dimensionless count].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,

    /// Spacing of the line-grid layout, or pitch of the hex layout [m].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    spacing: Option<f64>,

    /// Domain extent: L (segment) or WxH (rectangle) [m, default: 3000x3000].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    extent: Option<String>,

    /// Boundary: torus or clipped [default: torus]. Station files keep their own.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary: Option<String>,

    /// Point set file for the stations layout (from `ingest` or `generate`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stations: Option<PathBuf>,

    /// Independent replicates [dimensionless count, default: 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    replicates: Option<usize>,

    /// Master random seed [dimensionless, default: 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,

    /// Log-normal shadowing sigma of ln S [dimensionless, default: none].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,

    /// Seed of the shadowing streams [dimensionless, default: 0].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    shadow_seed: Option<u64>,

    /// a_k constants for the reference laws: "builtin" or a k,a_k CSV [default: builtin].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ak: Option<String>,

    /// Output directory [default: abgraph-out].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

pub fn run(flags: Args) -> CliResult<()> {
    let a = resolve(&flags, flags.config.as_deref())?;
    let layout_name = a.layout.as_deref().unwrap_or("poisson");
    let domain = parse_domain(
        a.extent.as_deref().unwrap_or("3000x3000"),
        a.boundary.as_deref().unwrap_or("torus"),
    )?;
    let layout = match layout_name {
        "poisson" => Layout::Poisson {
            density: a.lambda_b.unwrap_or(0.01),
        },
        "line-grid" => Layout::LineGrid {
            spacing: a.spacing.ok_or_else(|| usage("layout line-grid needs --spacing"))?,
        },
        "hex" => Layout::HexGrid {
            spec: match (a.n, a.spacing) {
                (Some(n), None) => HexGridSpec::count(n),
                (None, Some(d)) => HexGridSpec::pitch(d),
                _ => return Err(usage("layout hex needs exactly one of --n or --spacing")),
            },
        },
        "stations" => Layout::Stations {
            points: read_pointset(
                a.stations
                    .as_deref()
                    .ok_or_else(|| usage("layout stations needs --stations"))?,
            )?,
        },
        other => {
            return Err(usage(format!(
                "unknown layout '{other}' (expected hex, poisson, line-grid or stations)"
            )))
        }
    };
    let shadow = match a.sigma {
        Some(s) => Some(ShadowConfig::new(s, a.shadow_seed.unwrap_or(0))?),
        None => None,
    };
    let cfg = ExperimentConfig {
        domain: match &layout {
            Layout::Stations { points } => *points.domain(),
            _ => domain,
        },
        layout,
        lambda_a: a.lambda_a.unwrap_or(0.1),
        k_values: a.k.clone().unwrap_or_else(|| vec![1, 5, 50]),
        replicates: a.replicates.unwrap_or(1),
        seed: a.seed.unwrap_or(1),
        shadow,
    };
    let ak_src: AkSource = a.ak.as_deref().unwrap_or("builtin").parse()?;
    let ak = load_ak_constants(&ak_src)?;
    let res = run_experiment(&cfg)?;

    let config = serde_json::json!({"experiment": cfg, "ak": ak.iter().collect::<Vec<_>>()});
    let mut run = RunArtifacts::new("simulate", config, Some(cfg.seed));
    for r in &res.per_k {
        let law = cfg.reference_law(r.k, &ak)?;
        println!(
            "k={} mean={:.4} var={:.4} cv={:.4} cv_analytic={:.4}",
            r.k,
            r.stats.mean,
            r.stats.variance,
            r.stats.cv,
            law.summary()?.cv
        );
        run.add(
            format!("hist_k{}.csv", r.k),
            csv_bytes(|b| write_histogram_csv(&r.histogram, Some(&law), b))?,
            serde_json::json!({"k": r.k, "reference": law, "columns": "degree,count,empirical_p,analytic_p"}),
        );
    }
    run.add(
        "summary.csv",
        csv_bytes(|b| res.write_summary_csv(&ak, b))?,
        serde_json::json!({"columns": "k,mean,var,cv,cv_analytic"}),
    );
    run.add(
        "stats.json",
        json_bytes(&serde_json::json!({"per_k": res.per_k.iter().map(|r| serde_json::json!({"k": r.k, "stats": r.stats})).collect::<Vec<_>>(),
            "users": res.users, "stations": res.stations})),
        to_json(&serde_json::json!({"layout": cfg.layout.name()})),
    );
    finish(&run, &out_dir(&a.out))
}
