use std::path::PathBuf;

use abgraph::dataio::{load_stations, pointset_csv, pointset_meta, BBox, LoadOptions, RunArtifacts};
use serde::{Deserialize, Serialize};

use crate::{finish, out_dir, resolve, to_json, usage, CliResult};

#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Args {
    /// JSON file with any of these options (snake_case keys); flags win.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<PathBuf>,

    /// Delimited station file with a header row.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,

    /// Bounding box lon_min,lat_min,lon_max,lat_max [degrees].
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bbox: Option<String>,

    /// Longitude column name [default: lon].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lon_col: Option<String>,

    /// Latitude column name [default: lat].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lat_col: Option<String>,

    /// Field delimiter, one character [default: ,].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    delimiter: Option<char>,

    /// Fail on the first malformed row instead of skipping it.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    strict: Option<bool>,

    /// Merge stations closer than this distance, keeping the first [m, default: no merging].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dedup: Option<f64>,

    /// Output directory [default: abgraph-out].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

pub fn run(flags: Args) -> CliResult<()> {
    let a = resolve(&flags, flags.config.as_deref())?;
    let input = a.input.clone().ok_or_else(|| usage("--input is required"))?;
    let bbox: BBox = a
        .bbox
        .as_deref()
        .ok_or_else(|| usage("--bbox is required"))?
        .parse()?;
    let delimiter = a.delimiter.unwrap_or(',');
    if !delimiter.is_ascii() {
        return Err(usage("--delimiter must be a single ASCII character"));
    }
    let opts = LoadOptions {
        lon_col: a.lon_col.clone().unwrap_or_else(|| "lon".into()),
        lat_col: a.lat_col.clone().unwrap_or_else(|| "lat".into()),
        delimiter: delimiter as u8,
        strict: a.strict.unwrap_or(false),
        dedup_m: a.dedup,
        ..LoadOptions::new(bbox)
    };
    let load = load_stations(&input, &opts)?;
    println!(
        "{} stations kept, {} outside the bbox, {} malformed, {} merged",
        load.points.len(),
        load.outside_bbox,
        load.skipped.len(),
        load.merged
    );
    let config = serde_json::json!({
        "input": input, "bbox": bbox, "lon_col": opts.lon_col, "lat_col": opts.lat_col,
        "delimiter": delimiter.to_string(), "strict": opts.strict, "dedup_m": opts.dedup_m,
    });
    let extra = serde_json::json!({
        "projection": load.projection,
        "outside_bbox": load.outside_bbox,
        "skipped": load.skipped.len(),
        "merged": load.merged,
    });
    let mut run = RunArtifacts::new("ingest", config, None);
    run.add(
        "stations.csv",
        pointset_csv(&load.points)?,
        to_json(&pointset_meta(&load.points, Some(extra))),
    );
    let mut skipped = String::from("line,reason\n");
    for s in &load.skipped {
        skipped.push_str(&format!("{},\"{}\"\n", s.line, s.reason.replace('"', "'")));
    }
    run.add("skipped.csv", skipped.into_bytes(), serde_json::json!({"columns": "line,reason"}));
    finish(&run, &out_dir(&a.out))
}
