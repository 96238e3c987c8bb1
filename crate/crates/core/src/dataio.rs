//! File formats and station ingestion.
//!
//! - Point sets: CSV `x[,y]` in meters plus a `<file>.meta.json` sidecar
//!   holding the domain, provenance and seed.
//! - Station files: delimited text with a header and longitude/latitude
//!   columns in degrees, projected to local meters.
//! - Run outputs: data files, one metadata sidecar per file, `run.meta.json`
//!   and a `MANIFEST.txt` of `sha256  path` lines.
//! - Shape constants: CSV `k,a_k`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::areas::{csv_err, fmt_f64};
use crate::fitting::AkTable;
use crate::geometry::{Boundary, Domain, PointSet, Provenance};
use crate::{rng, Error, Result};

/// Mean Earth radius used by the projection, meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSetMeta {
    pub domain: Domain,
    pub provenance: Provenance,
    pub seed: Option<u64>,
    pub n: usize,
    pub version: String,
    /// Free-form extra information (e.g. the projection of ingested data).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

/// CSV text of a point set: `x` (1D) or `x,y` (2D).
pub fn pointset_csv(ps: &PointSet) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let two = ps.domain().dim() == 2;
    if two {
        w.write_record(["x", "y"]).map_err(csv_err)?;
    } else {
        w.write_record(["x"]).map_err(csv_err)?;
    }
    for p in ps.coords() {
        if two {
            w.write_record([fmt_f64(p[0]), fmt_f64(p[1])]).map_err(csv_err)?;
        } else {
            w.write_record([fmt_f64(p[0])]).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

pub fn pointset_meta(ps: &PointSet, extra: Option<serde_json::Value>) -> PointSetMeta {
    PointSetMeta {
        domain: *ps.domain(),
        provenance: ps.provenance(),
        seed: ps.seed(),
        n: ps.len(),
        version: VERSION.to_string(),
        extra,
    }
}

/// Writes `path` and `path.meta.json`.
pub fn write_pointset(ps: &PointSet, path: &Path, extra: Option<serde_json::Value>) -> Result<()> {
    fs::write(path, pointset_csv(ps)?).map_err(|e| Error::io(path, e))?;
    let meta = serde_json::to_vec_pretty(&pointset_meta(ps, extra))
        .map_err(|e| Error::Data(e.to_string()))?;
    let side = sidecar_path(path);
    fs::write(&side, meta).map_err(|e| Error::io(side, e))
}

/// Reads a point set written by [`write_pointset`]; the sidecar must exist.
pub fn read_pointset(path: &Path) -> Result<PointSet> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: PointSetMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: side.clone(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let body = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(body.as_slice());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let dim = meta.domain.dim();
    let want: &[&str] = if dim == 2 { &["x", "y"] } else { &["x"] };
    let cols: Vec<usize> = want
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("missing column '{name}'"),
                })
        })
        .collect::<Result<_>>()?;
    let mut coords = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut p = [0.0; 2];
        for (a, &c) in cols.iter().enumerate() {
            p[a] = rec
                .get(c)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("bad coordinate: {e}"),
                })?;
        }
        coords.push(p);
    }
    if coords.len() != meta.n {
        return Err(Error::Data(format!(
            "{}: sidecar says {} points but the file has {}",
            path.display(),
            meta.n,
            coords.len()
        )));
    }
    PointSet::new(meta.domain, coords, meta.provenance, meta.seed)
}

/// A longitude/latitude rectangle in degrees.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lon_min: f64,
    pub lat_min: f64,
    pub lon_max: f64,
    pub lat_max: f64,
}

impl BBox {
    pub fn new(lon_min: f64, lat_min: f64, lon_max: f64, lat_max: f64) -> Result<Self> {
        let ok = (-180.0..=180.0).contains(&lon_min)
            && (-180.0..=180.0).contains(&lon_max)
            && (-90.0..=90.0).contains(&lat_min)
            && (-90.0..=90.0).contains(&lat_max)
            && lon_min < lon_max
            && lat_min < lat_max;
        if !ok {
            return Err(Error::invalid(format!(
                "invalid bbox lon [{lon_min}, {lon_max}] lat [{lat_min}, {lat_max}]"
            )));
        }
        Ok(BBox {
            lon_min,
            lat_min,
            lon_max,
            lat_max,
        })
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.lon_min && lon <= self.lon_max && lat >= self.lat_min && lat <= self.lat_max
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.lon_min + self.lon_max),
            0.5 * (self.lat_min + self.lat_max),
        )
    }
}

impl std::str::FromStr for BBox {
    type Err = Error;

    /// `lon_min,lat_min,lon_max,lat_max`.
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("bbox '{s}': {e}")))?;
        match v.as_slice() {
            [a, b, c, d] => BBox::new(*a, *b, *c, *d),
            _ => Err(Error::invalid(format!(
                "bbox '{s}' must be lon_min,lat_min,lon_max,lat_max"
            ))),
        }
    }
}

/// Equirectangular projection about the center of a bbox, shifted so the
/// bbox maps to `[0, W] x [0, H]` meters.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub lon0: f64,
    pub lat0: f64,
    pub bbox: BBox,
}

impl Projection {
    pub fn for_bbox(bbox: BBox) -> Self {
        let (lon0, lat0) = bbox.center();
        Projection { lon0, lat0, bbox }
    }

    fn kx(&self) -> f64 {
        EARTH_RADIUS_M * self.lat0.to_radians().cos() * std::f64::consts::PI / 180.0
    }

    fn ky(&self) -> f64 {
        EARTH_RADIUS_M * std::f64::consts::PI / 180.0
    }

    pub fn extent(&self) -> [f64; 2] {
        [
            (self.bbox.lon_max - self.bbox.lon_min) * self.kx(),
            (self.bbox.lat_max - self.bbox.lat_min) * self.ky(),
        ]
    }

    pub fn project(&self, lon: f64, lat: f64) -> [f64; 2] {
        let [w, h] = self.extent();
        [
            (lon - self.lon0) * self.kx() + 0.5 * w,
            (lat - self.lat0) * self.ky() + 0.5 * h,
        ]
    }

    pub fn unproject(&self, p: [f64; 2]) -> (f64, f64) {
        let [w, h] = self.extent();
        (
            (p[0] - 0.5 * w) / self.kx() + self.lon0,
            (p[1] - 0.5 * h) / self.ky() + self.lat0,
        )
    }

    pub fn domain(&self) -> Result<Domain> {
        let [w, h] = self.extent();
        Domain::rect(w, h, Boundary::Clipped)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub lon: f64,
    pub lat: f64,
    /// Every other column of the row, passed through untouched.
    pub tags: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadOptions {
    pub bbox: BBox,
    pub lon_col: String,
    pub lat_col: String,
    pub delimiter: u8,
    /// Abort on the first malformed row instead of skipping it.
    pub strict: bool,
    /// Merge stations closer than this many meters (first one wins).
    pub dedup_m: Option<f64>,
}

impl LoadOptions {
    pub fn new(bbox: BBox) -> Self {
        LoadOptions {
            bbox,
            lon_col: "lon".into(),
            lat_col: "lat".into(),
            delimiter: b',',
            strict: false,
            dedup_m: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkippedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct StationLoad {
    pub points: PointSet,
    /// Records kept, in point id order.
    pub records: Vec<StationRecord>,
    pub projection: Projection,
    pub skipped: Vec<SkippedRow>,
    pub outside_bbox: usize,
    pub merged: usize,
}

fn find_col(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing column '{name}' (header: {})", headers.iter().collect::<Vec<_>>().join(",")),
        })
}

/// Loads stations inside `opts.bbox` as a clipped point set in meters.
pub fn load_stations(path: &Path, opts: &LoadOptions) -> Result<StationLoad> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .flexible(true)
        .from_reader(file);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let lon_c = find_col(&headers, &opts.lon_col, path)?;
    let lat_c = find_col(&headers, &opts.lat_col, path)?;
    let projection = Projection::for_bbox(opts.bbox);
    let domain = projection.domain()?;
    let [w, h] = domain.extent();

    let mut records = Vec::new();
    let mut coords: Vec<[f64; 2]> = Vec::new();
    let mut skipped = Vec::new();
    let (mut outside, mut merged) = (0usize, 0usize);
    for rec in rdr.records() {
        let (line, parsed) = match rec {
            Err(e) => (
                e.position().map_or(0, |p| p.line()),
                Err(format!("unreadable row: {e}")),
            ),
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line());
                (line, parse_station(&rec, &headers, lon_c, lat_c))
            }
        };
        let station = match parsed {
            Ok(s) => s,
            Err(reason) => {
                if opts.strict {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        message: reason,
                    });
                }
                log::warn!("{}:{line}: skipping row: {reason}", path.display());
                skipped.push(SkippedRow { line, reason });
                continue;
            }
        };
        if !opts.bbox.contains(station.lon, station.lat) {
            outside += 1;
            continue;
        }
        let p = projection.project(station.lon, station.lat);
        let p = [p[0].clamp(0.0, w), p[1].clamp(0.0, h)];
        if let Some(r) = opts.dedup_m {
            if coords.iter().any(|q| domain.distance(q, &p) < r) {
                merged += 1;
                continue;
            }
        }
        coords.push(p);
        records.push(station);
    }
    if coords.is_empty() {
        return Err(Error::Data(format!(
            "{}: no stations inside bbox {:?} ({} outside, {} malformed)",
            path.display(),
            opts.bbox,
            outside,
            skipped.len()
        )));
    }
    let points = PointSet::new(domain, coords, Provenance::File, None)?;
    Ok(StationLoad {
        points,
        records,
        projection,
        skipped,
        outside_bbox: outside,
        merged,
    })
}

fn parse_station(
    rec: &csv::StringRecord,
    headers: &csv::StringRecord,
    lon_c: usize,
    lat_c: usize,
) -> std::result::Result<StationRecord, String> {
    if rec.len() != headers.len() {
        return Err(format!("expected {} fields, found {}", headers.len(), rec.len()));
    }
    let num = |c: usize, name: &str| -> std::result::Result<f64, String> {
        let raw = rec.get(c).unwrap_or("").trim();
        raw.parse::<f64>()
            .map_err(|_| format!("{name} '{raw}' is not a number"))
    };
    let lon = num(lon_c, "longitude")?;
    let lat = num(lat_c, "latitude")?;
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("longitude {lon} outside [-180, 180]"));
    }
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("latitude {lat} outside [-90, 90]"));
    }
    let tags = headers
        .iter()
        .zip(rec.iter())
        .enumerate()
        .filter(|(i, _)| *i != lon_c && *i != lat_c)
        .map(|(_, (h, v))| (h.trim().to_string(), v.to_string()))
        .collect();
    Ok(StationRecord { lon, lat, tags })
}

/// One output file held in memory until written.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    /// File name relative to the output directory.
    pub name: String,
    pub contents: Vec<u8>,
    /// Per-file metadata merged into its sidecar.
    pub meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunArtifacts {
    pub command: String,
    /// Fully resolved configuration of the run.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub files: Vec<Artifact>,
}

impl RunArtifacts {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunArtifacts {
            command: command.to_string(),
            config,
            seed,
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, contents: Vec<u8>, meta: serde_json::Value) {
        self.files.push(Artifact {
            name: name.into(),
            contents,
            meta,
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    /// Every file written, sorted by path (the manifest itself excluded).
    pub entries: Vec<ManifestEntry>,
    pub data_files: usize,
}

pub const MANIFEST_NAME: &str = "MANIFEST.txt";
pub const RUN_META_NAME: &str = "run.meta.json";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn json_bytes(v: &serde_json::Value) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| Error::Data(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes every artifact with its sidecar, then `run.meta.json` and
/// `MANIFEST.txt`. Contains no timestamps, so equal inputs give
/// byte-identical directories. On failure the files written so far are
/// removed.
pub fn write_results(run: &RunArtifacts, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut planned: Vec<(String, Vec<u8>)> = Vec::new();
    for a in &run.files {
        if a.name.is_empty()
            || a.name.contains(['/', '\\'])
            || a.name == MANIFEST_NAME
            || a.name == RUN_META_NAME
        {
            return Err(Error::invalid(format!("bad artifact name '{}'", a.name)));
        }
        // The artifact's own keys stay at the top level so that typed
        // sidecars (e.g. point sets) read back directly.
        let mut side = match &a.meta {
            serde_json::Value::Object(m) => m.clone(),
            serde_json::Value::Null => serde_json::Map::new(),
            other => serde_json::Map::from_iter([("value".to_string(), other.clone())]),
        };
        side.insert("file".into(), a.name.clone().into());
        side.insert(
            "run".into(),
            serde_json::json!({
                "command": run.command,
                "seed": run.seed,
                "version": VERSION,
                "config": run.config,
            }),
        );
        let side = serde_json::Value::Object(side);
        planned.push((a.name.clone(), a.contents.clone()));
        planned.push((format!("{}.meta.json", a.name), json_bytes(&side)?));
    }
    let mut names: Vec<&str> = run.files.iter().map(|a| a.name.as_str()).collect();
    names.sort_unstable();
    let run_meta = serde_json::json!({
        "command": run.command,
        "seed": run.seed,
        "version": VERSION,
        "config": run.config,
        "data_files": names,
    });
    planned.push((RUN_META_NAME.to_string(), json_bytes(&run_meta)?));
    planned.sort_by(|a, b| a.0.cmp(&b.0));
    for w in planned.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::invalid(format!("duplicate artifact name '{}'", w[0].0)));
        }
    }

    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<Manifest> {
        let mut entries = Vec::with_capacity(planned.len());
        for (name, bytes) in &planned {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
            written.push(p);
            entries.push(ManifestEntry {
                path: name.clone(),
                sha256: sha256_hex(bytes),
            });
        }
        let text: String = entries
            .iter()
            .map(|e| format!("{}  {}\n", e.sha256, e.path))
            .collect();
        let mp = dir.join(MANIFEST_NAME);
        fs::write(&mp, text).map_err(|e| Error::io(&mp, e))?;
        Ok(Manifest {
            entries,
            data_files: run.files.len(),
        })
    })();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    result
}

/// Where shape constants come from.
#[derive(Clone, Debug, PartialEq)]
pub enum AkSource {
    Builtin,
    Path(PathBuf),
}

impl std::str::FromStr for AkSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(if s == "builtin" {
            AkSource::Builtin
        } else {
            AkSource::Path(PathBuf::from(s))
        })
    }
}

/// Reads `k,a_k` constants; rejects duplicate `k` and non-positive values.
pub fn load_ak_constants(source: &AkSource) -> Result<AkTable> {
    let path = match source {
        AkSource::Builtin => return Ok(AkTable::builtin()),
        AkSource::Path(p) => p,
    };
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_slice());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let kc = find_col(&headers, "k", path)?;
    let ac = find_col(&headers, "a_k", path)?;
    let mut pairs: BTreeMap<u32, f64> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse {
            path: path.clone(),
            line,
            message,
        };
        let k: u32 = rec
            .get(kc)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| bad(format!("k: {e}")))?;
        let a: f64 = rec
            .get(ac)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| bad(format!("a_k: {e}")))?;
        if k == 0 {
            return Err(bad("k must be >= 1".into()));
        }
        if !(a.is_finite() && a > 0.0) {
            return Err(bad(format!("a_{k} must be > 0, got {a}")));
        }
        if pairs.insert(k, a).is_some() {
            return Err(bad(format!("duplicate entry for k = {k}")));
        }
    }
    AkTable::from_pairs(pairs)
}

/// Bounding box of the synthetic station fixture (central Enschede).
pub const FIXTURE_BBOX: BBox = BBox {
    lon_min: 6.86,
    lat_min: 52.20,
    lon_max: 6.92,
    lat_max: 52.24,
};
pub const FIXTURE_STATIONS: usize = 599;
pub const FIXTURE_OUTSIDE: usize = 41;
pub const FIXTURE_SEED: u64 = 20_240_599;

/// Synthetic clustered station layout in an OpenCelliD-like CSV.
///
/// A Thomas process: cluster centers uniform over a window slightly larger
/// than [`FIXTURE_BBOX`], a Poisson number of stations per cluster scattered
/// with a Gaussian kernel. The process runs until exactly
/// [`FIXTURE_STATIONS`] stations fall inside the bbox and
/// [`FIXTURE_OUTSIDE`] outside it.
pub fn synthetic_stations_csv(seed: u64) -> String {
    let b = FIXTURE_BBOX;
    let (lon0, lat0) = b.center();
    let m_per_deg_lat = EARTH_RADIUS_M.to_radians();
    let m_per_deg_lon = m_per_deg_lat * lat0.to_radians().cos();
    let pad = 0.01;
    let mut g = rng::stream(seed);
    let children = Poisson::new(14.0).expect("valid mean");
    let spread = Normal::new(0.0, 180.0).expect("valid sd");
    // A dense core around the center on top of the uniform clusters.
    let core = Normal::new(0.0, 700.0).expect("valid sd");
    let mut rows = String::from("radio,mcc,net,area,cell,lon,lat\n");
    let (mut inside, mut outside, mut cell) = (0usize, 0usize, 0u64);
    while inside < FIXTURE_STATIONS || outside < FIXTURE_OUTSIDE {
        let (clon, clat) = if g.random::<f64>() < 0.35 {
            (
                lon0 + core.sample(&mut g) / m_per_deg_lon,
                lat0 + core.sample(&mut g) / m_per_deg_lat,
            )
        } else {
            (
                b.lon_min - pad + g.random::<f64>() * (b.lon_max - b.lon_min + 2.0 * pad),
                b.lat_min - pad + g.random::<f64>() * (b.lat_max - b.lat_min + 2.0 * pad),
            )
        };
        let area = 1000 + g.random_range(0..200u32);
        for _ in 0..children.sample(&mut g) as usize {
            // Rounded to the written precision so membership matches the text.
            let lon = ((clon + spread.sample(&mut g) / m_per_deg_lon) * 1e6).round() / 1e6;
            let lat = ((clat + spread.sample(&mut g) / m_per_deg_lat) * 1e6).round() / 1e6;
            let keep = if b.contains(lon, lat) {
                inside < FIXTURE_STATIONS && {
                    inside += 1;
                    true
                }
            } else {
                outside < FIXTURE_OUTSIDE && {
                    outside += 1;
                    true
                }
            };
            if keep {
                let radio = ["GSM", "UMTS", "LTE"][g.random_range(0..3usize)];
                cell += 1;
                rows.push_str(&format!(
                    "{radio},204,{},{area},{},{lon:.6},{lat:.6}\n",
                    [4, 8, 16][g.random_range(0..3usize)],
                    100_000 + cell
                ));
            }
        }
    }
    rows
}
