//! Domains, the domain metric, and B-point / A-point layouts.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

/// A point in a 1D or 2D domain, in meters. 1D points keep `y = 0`.
pub type Point = [f64; 2];

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Opposite edges are identified; distances wrap per axis.
    Torus,
    /// Plain Euclidean distance inside the box.
    Clipped,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "torus" => Ok(Boundary::Torus),
            "clipped" => Ok(Boundary::Clipped),
            other => Err(Error::invalid(format!(
                "unknown boundary '{other}' (expected torus or clipped)"
            ))),
        }
    }
}

/// A segment `[0, L)` or a rectangle `[0, W) x [0, H)`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub struct Domain {
    dim: u8,
    extent: [f64; 2],
    boundary: Boundary,
}

#[derive(Serialize, Deserialize)]
struct DomainRepr {
    dimension: u8,
    extent: Vec<f64>,
    boundary: Boundary,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;

    fn try_from(r: DomainRepr) -> Result<Self> {
        match (r.dimension, r.extent.as_slice()) {
            (1, [l]) => Domain::line(*l, r.boundary),
            (2, [w, h]) => Domain::rect(*w, *h, r.boundary),
            (d, e) => Err(Error::invalid(format!(
                "domain of dimension {d} with {} extents",
                e.len()
            ))),
        }
    }
}

impl From<Domain> for DomainRepr {
    fn from(d: Domain) -> Self {
        DomainRepr {
            dimension: d.dim,
            extent: d.extent[..d.dim as usize].to_vec(),
            boundary: d.boundary,
        }
    }
}

fn check_extent(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

impl Domain {
    pub fn line(length: f64, boundary: Boundary) -> Result<Self> {
        check_extent("length", length)?;
        Ok(Domain {
            dim: 1,
            extent: [length, 0.0],
            boundary,
        })
    }

    pub fn rect(width: f64, height: f64, boundary: Boundary) -> Result<Self> {
        check_extent("width", width)?;
        check_extent("height", height)?;
        Ok(Domain {
            dim: 2,
            extent: [width, height],
            boundary,
        })
    }

    /// Square torus with side `side`.
    pub fn square_torus(side: f64) -> Result<Self> {
        Domain::rect(side, side, Boundary::Torus)
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    /// Per-axis lengths; only the first [`Domain::dim`] entries are meaningful.
    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    /// Total length (1D) or area (2D).
    pub fn total_measure(&self) -> f64 {
        match self.dim {
            1 => self.extent[0],
            _ => self.extent[0] * self.extent[1],
        }
    }

    /// Same domain with every extent multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        check_extent("scale", c)?;
        let mut d = *self;
        d.extent[0] *= c;
        d.extent[1] *= c;
        Ok(d)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim()).all(|a| p[a] >= 0.0 && p[a] <= self.extent[a])
            && (self.dim == 2 || p[1] == 0.0)
    }

    /// Wraps a point into `[0, L)` per axis. A no-op for clipped domains.
    pub fn wrap(&self, p: Point) -> Point {
        if self.boundary == Boundary::Clipped {
            return p;
        }
        let mut q = p;
        for a in 0..self.dim() {
            let l = self.extent[a];
            let mut v = q[a].rem_euclid(l);
            if v >= l {
                v -= l;
            }
            q[a] = v;
        }
        q
    }

    /// Per-axis separation under the domain metric.
    #[inline]
    pub fn axis_separation(&self, axis: usize, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        match self.boundary {
            Boundary::Torus => {
                let l = self.extent[axis];
                d.min(l - d)
            }
            Boundary::Clipped => d,
        }
    }

    /// Squared distance; the ordering key used by every nearest-neighbour routine.
    #[inline]
    pub fn distance_sq(&self, p: &Point, q: &Point) -> f64 {
        let dx = self.axis_separation(0, p[0], q[0]);
        if self.dim == 1 {
            return dx * dx;
        }
        let dy = self.axis_separation(1, p[1], q[1]);
        dx * dx + dy * dy
    }

    /// Euclidean distance with per-axis wrap-around on a torus.
    #[inline]
    pub fn distance(&self, p: &Point, q: &Point) -> f64 {
        self.distance_sq(p, q).sqrt()
    }
}

/// Free-function form of [`Domain::distance`].
pub fn distance(p: &Point, q: &Point, domain: &Domain) -> f64 {
    domain.distance(p, q)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Homogeneous Poisson process (random count).
    Poisson,
    /// A fixed number of i.i.d. uniform points, i.e. a Poisson process
    /// conditioned on its count.
    Uniform,
    LineGrid,
    HexGrid,
    File,
}

/// An ordered collection of points tied to a [`Domain`]. Point ids are the
/// positions in [`PointSet::coords`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    domain: Domain,
    coords: Vec<Point>,
    provenance: Provenance,
    seed: Option<u64>,
}

impl PointSet {
    /// Validates coordinates against the domain. On a torus coordinates are
    /// wrapped first; on a clipped domain anything outside is rejected.
    pub fn new(
        domain: Domain,
        coords: Vec<Point>,
        provenance: Provenance,
        seed: Option<u64>,
    ) -> Result<Self> {
        let mut coords = coords;
        for (i, p) in coords.iter_mut().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::invalid(format!("point {i} is not finite")));
            }
            if domain.dim() == 1 {
                p[1] = 0.0;
            }
            *p = domain.wrap(*p);
            if !domain.contains(p) {
                return Err(Error::invalid(format!(
                    "point {i} ({}, {}) lies outside the domain {:?}",
                    p[0],
                    p[1],
                    domain.extent()
                )));
            }
        }
        Ok(PointSet {
            domain,
            coords,
            provenance,
            seed,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Errors unless the set holds at least `k` points.
    pub fn require(&self, k: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyPointSet(format!(
                "{:?} layout produced no points",
                self.provenance
            )));
        }
        if self.len() < k {
            return Err(Error::NotEnoughPoints { k, n: self.len() });
        }
        Ok(())
    }

    /// Coordinates and extent multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let domain = self.domain.scaled(c)?;
        let coords = self.coords.iter().map(|p| [p[0] * c, p[1] * c]).collect();
        PointSet::new(domain, coords, self.provenance, self.seed)
    }
}

fn uniform_point<R: Rng + ?Sized>(domain: &Domain, rng: &mut R) -> Point {
    let [w, h] = domain.extent();
    let x = rng.random::<f64>() * w;
    let y = if domain.dim() == 2 {
        rng.random::<f64>() * h
    } else {
        0.0
    };
    [x, y]
}

/// `n` i.i.d. uniform points drawn from `rng`.
pub fn sample_uniform<R: Rng + ?Sized>(domain: &Domain, n: usize, rng: &mut R) -> Vec<Point> {
    (0..n)
        .map(|_| domain.wrap(uniform_point(domain, rng)))
        .collect()
}

/// Homogeneous Poisson points as raw coordinates (possibly empty).
pub fn sample_poisson<R: Rng + ?Sized>(
    domain: &Domain,
    density: f64,
    rng: &mut R,
) -> Result<Vec<Point>> {
    if !(density.is_finite() && density > 0.0) {
        return Err(Error::invalid(format!(
            "density must be finite and > 0, got {density}"
        )));
    }
    let mean = density * domain.total_measure();
    let count = Poisson::new(mean)
        .map_err(|e| Error::invalid(format!("Poisson mean {mean}: {e}")))?
        .sample(rng) as usize;
    Ok(sample_uniform(domain, count, rng))
}

/// Homogeneous Poisson process with `density` points per unit length/area.
///
/// Fails with [`Error::EmptyPointSet`] when the realization is empty.
pub fn gen_poisson(domain: &Domain, density: f64, seed: u64) -> Result<PointSet> {
    let mut rng = rng::stream(seed);
    let coords = sample_poisson(domain, density, &mut rng)?;
    if coords.is_empty() {
        return Err(Error::EmptyPointSet(format!(
            "Poisson layout with mean {} drew zero points (seed {seed})",
            density * domain.total_measure()
        )));
    }
    PointSet::new(*domain, coords, Provenance::Poisson, Some(seed))
}

/// Exactly `n` i.i.d. uniform points.
pub fn gen_uniform(domain: &Domain, n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::EmptyPointSet("uniform layout with n = 0".into()));
    }
    let mut rng = rng::stream(seed);
    let coords = sample_uniform(domain, n, &mut rng);
    PointSet::new(*domain, coords, Provenance::Uniform, Some(seed))
}

const GRID_RTOL: f64 = 1e-9;

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let q = num / den;
    let r = q.round();
    if r >= 1.0 && (q - r).abs() <= GRID_RTOL * r {
        Some(r as usize)
    } else {
        None
    }
}

/// Equally spaced points `0, d, 2d, ...` on a 1D domain whose length is a
/// whole multiple of `d`.
pub fn gen_line_grid(domain: &Domain, spacing: f64) -> Result<PointSet> {
    if domain.dim() != 1 {
        return Err(Error::invalid("line grid needs a 1D domain"));
    }
    check_extent("spacing", spacing)?;
    let length = domain.extent()[0];
    let n = integer_ratio(length, spacing).ok_or_else(|| {
        let q = length / spacing;
        Error::IncompatibleGrid(format!(
            "length {length} is not an integer multiple of spacing {spacing} \
             ({q:.6} gaps); compatible spacings nearby: {} or {}",
            length / q.floor().max(1.0),
            length / q.ceil().max(1.0)
        ))
    })?;
    let coords = (0..n).map(|i| [i as f64 * spacing, 0.0]).collect();
    PointSet::new(*domain, coords, Provenance::LineGrid, None)
}

/// How a hexagonal (triangular point) lattice is sized.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HexSizing {
    /// Equilateral lattice with this nearest-neighbour distance in meters.
    /// The domain must hold a whole number of columns and an even number of
    /// rows so the lattice closes on the torus.
    Pitch(f64),
    /// Exactly `n` points, arranged as the most nearly equilateral lattice
    /// that closes on the torus. `max_anisotropy` bounds the relative spread
    /// of the three nearest-neighbour distances.
    Count { n: usize, max_anisotropy: f64 },
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HexGridSpec {
    pub sizing: HexSizing,
    /// Translation applied to every lattice point (meters).
    pub offset: Point,
}

impl HexGridSpec {
    pub const DEFAULT_MAX_ANISOTROPY: f64 = 0.02;

    pub fn pitch(spacing: f64) -> Self {
        HexGridSpec {
            sizing: HexSizing::Pitch(spacing),
            offset: [0.0, 0.0],
        }
    }

    pub fn count(n: usize) -> Self {
        HexGridSpec {
            sizing: HexSizing::Count {
                n,
                max_anisotropy: Self::DEFAULT_MAX_ANISOTROPY,
            },
            offset: [0.0, 0.0],
        }
    }
}

/// A lattice that closes on a rectangular torus.
///
/// Every such lattice with `n = cols * rows` points has a basis
/// `b1 = (W / cols, H * shear / n)`, `b2 = (0, H / rows)`; its points are
/// `i * b1 + j * b2` for `i < cols`, `j < rows`, taken modulo the torus.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusLattice {
    pub cols: usize,
    pub rows: usize,
    pub shear: usize,
    /// Relative spread of the nearest-neighbour distances (0 for equilateral).
    pub anisotropy: f64,
}

impl TorusLattice {
    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn points(&self, width: f64, height: f64) -> Vec<Point> {
        let n = self.len() as u128;
        let mut pts = Vec::with_capacity(self.len());
        for i in 0..self.cols {
            for j in 0..self.rows {
                let units = (i as u128 * self.shear as u128 + j as u128 * self.cols as u128) % n;
                pts.push([
                    width * i as f64 / self.cols as f64,
                    height * units as f64 / n as f64,
                ]);
            }
        }
        pts
    }
}

fn lattice_anisotropy(width: f64, height: f64, cols: usize, rows: usize, shear: usize) -> f64 {
    let n = (cols * rows) as f64;
    let mut u = [width / cols as f64, height * shear as f64 / n];
    let mut v = [0.0, height / rows as f64];
    let dot = |a: &[f64; 2], b: &[f64; 2]| a[0] * b[0] + a[1] * b[1];
    // Lagrange-Gauss reduction.
    for _ in 0..256 {
        if dot(&u, &u) > dot(&v, &v) {
            std::mem::swap(&mut u, &mut v);
        }
        let ratio = dot(&u, &v) / dot(&u, &u);
        if ratio.abs() <= 0.5 + 1e-12 {
            break;
        }
        let m = ratio.round();
        v = [v[0] - m * u[0], v[1] - m * u[1]];
    }
    let plus = [u[0] + v[0], u[1] + v[1]];
    let minus = [u[0] - v[0], u[1] - v[1]];
    let w = dot(&plus, &plus).min(dot(&minus, &minus));
    let lens = [dot(&u, &u).sqrt(), dot(&v, &v).sqrt(), w.sqrt()];
    let max = lens.iter().cloned().fold(0.0, f64::max);
    let min = lens.iter().cloned().fold(f64::INFINITY, f64::min);
    (max - min) / max
}

/// Most nearly equilateral torus lattice with exactly `n` points.
pub fn best_torus_lattice(width: f64, height: f64, n: usize) -> TorusLattice {
    let mut best = TorusLattice {
        cols: n,
        rows: 1,
        shear: 0,
        anisotropy: f64::INFINITY,
    };
    for rows in (1..=n).filter(|r| n % r == 0) {
        let cols = n / rows;
        for shear in 0..cols {
            let a = lattice_anisotropy(width, height, cols, rows, shear);
            if a < best.anisotropy {
                best = TorusLattice {
                    cols,
                    rows,
                    shear,
                    anisotropy: a,
                };
                if a < 1e-12 {
                    return best;
                }
            }
        }
    }
    best
}

/// Triangular point lattice (hexagonal Voronoi cells) on a 2D torus.
///
/// With [`HexSizing::Pitch`] the lattice is exactly equilateral and the
/// domain must fit it. With [`HexSizing::Count`] the requested count is
/// realized exactly; all points are equivalent under translation, so every
/// cell is congruent even when the lattice is slightly sheared to close on
/// the torus.
pub fn gen_hex_grid(domain: &Domain, spec: &HexGridSpec) -> Result<PointSet> {
    let lattice = hex_lattice(domain, spec)?;
    let [w, h] = domain.extent();
    let coords = lattice
        .points(w, h)
        .into_iter()
        .map(|p| [p[0] + spec.offset[0], p[1] + spec.offset[1]])
        .collect();
    PointSet::new(*domain, coords, Provenance::HexGrid, None)
}

/// The lattice [`gen_hex_grid`] realizes for `spec`, without generating points.
pub fn hex_lattice(domain: &Domain, spec: &HexGridSpec) -> Result<TorusLattice> {
    if domain.dim() != 2 {
        return Err(Error::invalid("hex grid needs a 2D domain"));
    }
    if domain.boundary() != Boundary::Torus {
        return Err(Error::invalid("hex grid is generated on a torus"));
    }
    let [w, h] = domain.extent();
    let lattice = match spec.sizing {
        HexSizing::Pitch(a) => {
            check_extent("pitch", a)?;
            let row_h = a * 3f64.sqrt() / 2.0;
            let cols = integer_ratio(w, a);
            let rows = integer_ratio(h, row_h).filter(|r| r % 2 == 0);
            match (cols, rows) {
                (Some(cols), Some(rows)) => TorusLattice {
                    cols: 2 * cols,
                    rows: rows / 2,
                    shear: cols,
                    anisotropy: lattice_anisotropy(w, h, 2 * cols, rows / 2, cols),
                },
                _ => {
                    let c = (w / a).round().max(1.0);
                    let r = (2.0 * (h / row_h / 2.0).round()).max(2.0);
                    return Err(Error::IncompatibleGrid(format!(
                        "pitch {a} does not close on a {w} x {h} torus (needs whole columns \
                         and an even row count); nearest compatible lattice has N = {} \
                         ({c} columns x {r} rows) on a {} x {} torus",
                        (c * r) as usize,
                        c * a,
                        r * row_h
                    )));
                }
            }
        }
        HexSizing::Count { n, max_anisotropy } => {
            if n == 0 {
                return Err(Error::EmptyPointSet("hex grid with n = 0".into()));
            }
            let best = best_torus_lattice(w, h, n);
            if best.anisotropy > max_anisotropy {
                let nearest = (1..=n / 4 + 4)
                    .flat_map(|d| [n.checked_sub(d), Some(n + d)])
                    .flatten()
                    .find(|&m| m > 0 && best_torus_lattice(w, h, m).anisotropy <= max_anisotropy);
                return Err(Error::IncompatibleGrid(format!(
                    "no lattice with {n} points closes on a {w} x {h} torus within anisotropy \
                     {max_anisotropy} (best {:.4}); nearest compatible N = {}",
                    best.anisotropy,
                    nearest.map_or("none".to_string(), |m| m.to_string())
                )));
            }
            best
        }
    };
    Ok(lattice)
}

/// Torus that holds an exactly equilateral lattice of `cols x rows` points
/// (`rows` even) with the given pitch.
pub fn hex_compatible_domain(cols: usize, rows: usize, pitch: f64) -> Result<Domain> {
    if rows % 2 != 0 || rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "hex torus needs cols >= 1 and an even number of rows, got {cols} x {rows}"
        )));
    }
    Domain::rect(
        cols as f64 * pitch,
        rows as f64 * pitch * 3f64.sqrt() / 2.0,
        Boundary::Torus,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::line(0.0, Boundary::Torus).is_err());
        assert!(Domain::rect(1.0, -1.0, Boundary::Torus).is_err());
        assert!(Domain::rect(1.0, f64::NAN, Boundary::Torus).is_err());
        let d = Domain::rect(3.0, 4.0, Boundary::Clipped).unwrap();
        assert_eq!(d.total_measure(), 12.0);
        assert_eq!(Domain::line(7.5, Boundary::Torus).unwrap().total_measure(), 7.5);
    }

    #[test]
    fn distance_examples() {
        let torus = Domain::line(10.0, Boundary::Torus).unwrap();
        let clipped = Domain::line(10.0, Boundary::Clipped).unwrap();
        assert_eq!(torus.distance(&[1.0, 0.0], &[9.0, 0.0]), 2.0);
        assert_eq!(clipped.distance(&[1.0, 0.0], &[9.0, 0.0]), 8.0);
        let t2 = Domain::square_torus(10.0).unwrap();
        assert!(approx(
            distance(&[0.0, 0.0], &[9.0, 9.0], &t2),
            2f64.sqrt(),
            1e-12
        ));
    }

    #[test]
    fn torus_separation_is_at_most_half_extent() {
        let d = Domain::rect(10.0, 6.0, Boundary::Torus).unwrap();
        let mut rng = rng::stream(3);
        let pts = sample_uniform(&d, 200, &mut rng);
        for p in &pts {
            for q in &pts {
                assert!(d.axis_separation(0, p[0], q[0]) <= 5.0);
                assert!(d.axis_separation(1, p[1], q[1]) <= 3.0);
            }
        }
    }

    #[test]
    fn domain_serde_roundtrip() {
        let d = Domain::rect(3000.0, 2000.0, Boundary::Torus).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"dimension":2,"extent":[3000.0,2000.0],"boundary":"torus"}"#);
        let back: Domain = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<Domain>(
            r#"{"dimension":1,"extent":[-1.0],"boundary":"torus"}"#
        )
        .is_err());
    }

    #[test]
    fn poisson_is_deterministic() {
        let d = Domain::square_torus(30.0).unwrap();
        let a = gen_poisson(&d, 0.1, 99).unwrap();
        let b = gen_poisson(&d, 0.1, 99).unwrap();
        assert_eq!(a.coords(), b.coords());
        assert_ne!(a.coords(), gen_poisson(&d, 0.1, 100).unwrap().coords());
        assert!(a.coords().iter().all(|p| d.contains(p)));
    }

    #[test]
    fn poisson_empty_realization_errors() {
        let d = Domain::line(1.0, Boundary::Torus).unwrap();
        let empty = (0..100).find_map(|s| match gen_poisson(&d, 1e-3, s) {
            Err(Error::EmptyPointSet(_)) => Some(()),
            _ => None,
        });
        assert!(empty.is_some());
        assert!(gen_poisson(&d, 0.0, 1).is_err());
    }

    #[test]
    fn poisson_1d_mean_count() {
        let d = Domain::line(100.0, Boundary::Torus).unwrap();
        let r = 1000;
        let total: usize = (0..r)
            .map(|s| {
                let mut g = rng::stream(s);
                sample_poisson(&d, 0.1, &mut g).unwrap().len()
            })
            .sum();
        let mean = total as f64 / r as f64;
        assert!((mean - 10.0).abs() < 3.0 * 10f64.sqrt() / (r as f64).sqrt());
    }

    #[test]
    fn line_grid_examples() {
        let d = Domain::line(10.0, Boundary::Torus).unwrap();
        let g = gen_line_grid(&d, 2.0).unwrap();
        let xs: Vec<f64> = g.coords().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        assert!(matches!(
            gen_line_grid(&d, 3.0),
            Err(Error::IncompatibleGrid(_))
        ));
        let d = Domain::line(1.5, Boundary::Torus).unwrap();
        let g = gen_line_grid(&d, 0.5).unwrap();
        assert_eq!(g.len(), 3);
        for w in g.coords().windows(2) {
            assert!(approx(w[1][0] - w[0][0], 0.5, 1e-12));
        }
        // wrap-around gap
        assert!(approx(1.5 - g.coords()[2][0], 0.5, 1e-12));
    }

    fn nn_distances(ps: &PointSet, i: usize, m: usize) -> Vec<f64> {
        let p = ps.coords()[i];
        let mut d: Vec<f64> = ps
            .coords()
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| ps.domain().distance(&p, q))
            .collect();
        d.sort_by(f64::total_cmp);
        d.truncate(m);
        d
    }

    #[test]
    fn pitch_lattice_is_equilateral() {
        let d = hex_compatible_domain(12, 10, 5.0).unwrap();
        let g = gen_hex_grid(&d, &HexGridSpec::pitch(5.0)).unwrap();
        assert_eq!(g.len(), 120);
        for i in 0..g.len() {
            let nn = nn_distances(&g, i, 7);
            let spread = (nn[5] - nn[0]) / nn[5];
            assert!(spread < 1e-9, "point {i}: {nn:?}");
            assert!(nn[6] > nn[5] * 1.5);
            assert!(approx(nn[0], 5.0, 1e-9));
        }
    }

    #[test]
    fn pitch_incompatible_errors() {
        let d = Domain::square_torus(100.0).unwrap();
        match gen_hex_grid(&d, &HexGridSpec::pitch(7.0)) {
            Err(Error::IncompatibleGrid(msg)) => assert!(msg.contains("N =")),
            other => panic!("expected incompatible grid, got {other:?}"),
        }
    }

    #[test]
    fn count_lattice_realizes_exact_count() {
        let d = Domain::square_torus(3000.0).unwrap();
        let spec = HexGridSpec::count(22785);
        let lat = hex_lattice(&d, &spec).unwrap();
        assert_eq!(lat.len(), 22785);
        assert!(lat.anisotropy < 0.02);
        let g = gen_hex_grid(&d, &spec).unwrap();
        assert_eq!(g.len(), 22785);
    }

    #[test]
    fn count_lattice_recovers_equilateral_when_possible() {
        let d = hex_compatible_domain(10, 8, 3.0).unwrap();
        let lat = best_torus_lattice(d.extent()[0], d.extent()[1], 80);
        assert!(lat.anisotropy < 1e-9);
    }

    #[test]
    fn count_lattice_reports_nearest_compatible() {
        // A very elongated torus cannot host a near-regular lattice with a prime count.
        let d = Domain::rect(100.0, 1.0, Boundary::Torus).unwrap();
        let spec = HexGridSpec {
            sizing: HexSizing::Count {
                n: 7,
                max_anisotropy: 1e-3,
            },
            offset: [0.0, 0.0],
        };
        assert!(matches!(
            gen_hex_grid(&d, &spec),
            Err(Error::IncompatibleGrid(_))
        ));
    }

    #[test]
    fn point_set_rejects_outside_points_when_clipped() {
        let d = Domain::rect(1.0, 1.0, Boundary::Clipped).unwrap();
        assert!(PointSet::new(d, vec![[2.0, 0.5]], Provenance::File, None).is_err());
        let t = d.with_boundary(Boundary::Torus);
        let ps = PointSet::new(t, vec![[2.25, -0.25]], Provenance::File, None).unwrap();
        assert_eq!(ps.coords()[0], [0.25, 0.75]);
    }
}
