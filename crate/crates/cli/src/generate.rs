use std::path::PathBuf;

use abgraph::dataio::{pointset_csv, pointset_meta, RunArtifacts};
use abgraph::geometry::{gen_hex_grid, gen_line_grid, gen_poisson, gen_uniform, HexGridSpec};
use serde::{Deserialize, Serialize};

use crate::{finish, out_dir, parse_domain, resolve, to_json, usage, CliResult};

#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Args {
    /// JSON file with any of these options (snake_case keys); flags win.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<PathBuf>,

    /// Layout: poisson, uniform, line-grid or hex [default: poisson].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    layout: Option<String>,

    /// Domain extent in meters: L (segment) or WxH (rectangle) [default: 1000x1000].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    extent: Option<String>,

    /// Boundary: torus or clipped [default: torus].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary: Option<String>,

    /// Poisson density [points per m², or per m on a segment].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    density: Option<f64>,

    /// Number of points for uniform and hex layouts [dimensionless count].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,

    /// Grid spacing for line-grid, or lattice pitch for hex [m].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    spacing: Option<f64>,

    /// Master random seed [dimensionless, default: 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,

    /// Output directory [default: abgraph-out].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Resolved<'a> {
    layout: &'a str,
    extent: &'a str,
    boundary: &'a str,
    density: Option<f64>,
    n: Option<usize>,
    spacing: Option<f64>,
    seed: u64,
}

pub fn run(flags: Args) -> CliResult<()> {
    let a = resolve(&flags, flags.config.as_deref())?;
    let r = Resolved {
        layout: a.layout.as_deref().unwrap_or("poisson"),
        extent: a.extent.as_deref().unwrap_or("1000x1000"),
        boundary: a.boundary.as_deref().unwrap_or("torus"),
        density: a.density,
        n: a.n,
        spacing: a.spacing,
        seed: a.seed.unwrap_or(1),
    };
    let domain = parse_domain(r.extent, r.boundary)?;
    let need = |v: Option<f64>, what: &str| v.ok_or_else(|| usage(format!("--{what} is required for layout {}", r.layout)));
    let points = match r.layout {
        "poisson" => gen_poisson(&domain, need(r.density, "density")?, r.seed)?,
        "uniform" => gen_uniform(
            &domain,
            r.n.ok_or_else(|| usage("--n is required for layout uniform"))?,
            r.seed,
        )?,
        "line-grid" => gen_line_grid(&domain, need(r.spacing, "spacing")?)?,
        "hex" => {
            let spec = match (r.n, r.spacing) {
                (Some(n), None) => HexGridSpec::count(n),
                (None, Some(d)) => HexGridSpec::pitch(d),
                _ => return Err(usage("layout hex needs exactly one of --n or --spacing")),
            };
            gen_hex_grid(&domain, &spec)?
        }
        other => {
            return Err(usage(format!(
                "unknown layout '{other}' (expected poisson, uniform, line-grid or hex)"
            )))
        }
    };
    let mut run = RunArtifacts::new("generate", to_json(&r), Some(r.seed));
    run.add(
        "points.csv",
        pointset_csv(&points)?,
        to_json(&pointset_meta(&points, None)),
    );
    finish(&run, &out_dir(&a.out))
}
