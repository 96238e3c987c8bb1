//! The `abgraph` command line.
//!
//! Every subcommand writes its data files, one `.meta.json` sidecar per file,
//! `run.meta.json` with the fully resolved configuration, and `MANIFEST.txt`
//! into `--out`. Options resolve as built-in defaults < `--config` file <
//! flags.
//!
//! Exit codes: 0 success, 1 usage or invalid configuration, 2 data error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use abgraph::dataio::{write_results, RunArtifacts};
use abgraph::geometry::{Boundary, Domain};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

mod analytic;
mod areas;
mod fit;
mod generate;
mod ingest;
mod simulate;

#[derive(Debug, Parser)]
#[command(
    name = "abgraph",
    version,
    about = "Degree distributions of k-connected AB random geometric graphs",
    long_about = "Degree distributions of k-connected AB random geometric graphs.\n\n\
        Distances are in meters, densities in points per m² (per m on a line).\n\
        Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure."
)]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a B-point layout and write it as a point set.
    #[command(allow_negative_numbers = true)]
    Generate(generate::Args),
    /// Order-k Voronoi areas of a point set and their CDFs.
    #[command(allow_negative_numbers = true)]
    Areas(areas::Args),
    /// Fit the gamma shapes a_k of the normalized area laws.
    #[command(allow_negative_numbers = true)]
    Fit(fit::Args),
    /// Tabulate analytic degree or area laws and c_V curves.
    #[command(allow_negative_numbers = true)]
    Analytic(analytic::Args),
    /// Monte Carlo degree histograms of k-connected AB graphs.
    #[command(allow_negative_numbers = true)]
    Simulate(simulate::Args),
    /// Distance between a degree histogram and an analytic law.
    #[command(allow_negative_numbers = true)]
    Compare(analytic::CompareArgs),
    /// Load station coordinates (lon/lat CSV) into a point set.
    #[command(allow_negative_numbers = true)]
    Ingest(ingest::Args),
}

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Lib(abgraph::Error),
}

impl From<abgraph::Error> for CliError {
    fn from(e: abgraph::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        use abgraph::Error as E;
        fn lib(e: &E) -> i32 {
            match e {
                E::InvalidParameter(_) | E::NotEnoughPoints { .. } | E::IncompatibleGrid(_) => 1,
                E::EmptyPointSet(_) | E::Data(_) | E::Io { .. } | E::Parse { .. } => 2,
                E::Numeric(_) => 3,
                E::Replicate { source, .. } => lib(source),
            }
        }
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) => lib(e),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

pub(crate) type CliResult<T> = Result<T, CliError>;

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();

    let run = || match cli.command {
        Command::Generate(a) => generate::run(a),
        Command::Areas(a) => areas::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Analytic(a) => analytic::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Compare(a) => analytic::compare(a),
        Command::Ingest(a) => ingest::run(a),
    };
    let result = match cli.threads {
        Some(0) => Err(usage("--threads must be >= 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(usage(format!("cannot start {n} threads: {e}"))),
        },
        None => run(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Overlays the non-empty flags of `flags` on the JSON object in `config`.
pub(crate) fn resolve<T: Serialize + DeserializeOwned>(
    flags: &T,
    config: Option<&Path>,
) -> CliResult<T> {
    let mut merged = match config {
        None => serde_json::Map::new(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Lib(abgraph::Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })
            })?;
            match serde_json::from_str(&text) {
                Ok(serde_json::Value::Object(m)) => m,
                Ok(_) => return Err(usage(format!("{}: config must be a JSON object", p.display()))),
                Err(e) => return Err(usage(format!("{}: {e}", p.display()))),
            }
        }
    };
    merged.remove("config");
    let flags = serde_json::to_value(flags).map_err(|e| usage(e.to_string()))?;
    if let serde_json::Value::Object(m) = flags {
        for (k, v) in m {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(serde_json::Value::Object(merged))
        .map_err(|e| usage(format!("invalid configuration: {e}")))
}

/// `L` for a segment, `WxH` for a rectangle (meters).
pub(crate) fn parse_domain(extent: &str, boundary: &str) -> CliResult<Domain> {
    let boundary: Boundary = boundary.parse()?;
    let parts: Vec<&str> = extent.split(['x', 'X']).collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("bad extent '{extent}' (expected L or WxH in meters)")))
    };
    Ok(match parts.as_slice() {
        [l] => Domain::line(num(l)?, boundary)?,
        [w, h] => Domain::rect(num(w)?, num(h)?, boundary)?,
        _ => return Err(usage(format!("bad extent '{extent}' (expected L or WxH in meters)"))),
    })
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

pub(crate) fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

/// Writes the run and reports what was written.
pub(crate) fn finish(run: &RunArtifacts, out: &Path) -> CliResult<()> {
    let manifest = write_results(run, out)?;
    log::info!(
        "{}: wrote {} data files to {}",
        run.command,
        manifest.data_files,
        out.display()
    );
    for e in &manifest.entries {
        println!("{}", out.join(&e.path).display());
    }
    Ok(())
}

pub(crate) fn out_dir(out: &Option<PathBuf>) -> PathBuf {
    out.clone().unwrap_or_else(|| PathBuf::from("abgraph-out"))
}

pub(crate) fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> abgraph::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}
