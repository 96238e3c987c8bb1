//! Exact ordered k-nearest-neighbour queries under the domain metric.
//!
//! [`NnIndex`] buckets the points of a [`PointSet`] into a uniform grid
//! (about two points per bucket) and searches rings of buckets outward from
//! the query until no unvisited bucket can hold a closer point. Results are
//! ordered by `(distance, point id)`, which is also the tie-break.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{Boundary, Point, PointSet};
use crate::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    /// Distance in meters (for shadowed queries: the effective distance `d / S`).
    pub distance: f64,
}

/// Log-normal shadowing of link distances.
///
/// Each (station, user) pair gets an independent `S = exp(mu + sigma * Z)`
/// with `mu = -sigma^2 / 2`, so that `E[S] = 1`; stations are ranked by
/// `d / S`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowConfig {
    pub sigma: f64,
    pub seed: u64,
}

impl ShadowConfig {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "shadowing sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(ShadowConfig { sigma, seed })
    }

    /// Location of the underlying normal.
    pub fn mu(&self) -> f64 {
        -0.5 * self.sigma * self.sigma
    }

    /// One shadowing factor.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.mu() + self.sigma * z).exp()
    }
}

/// Bucket-grid spatial index over an immutable point set.
#[derive(Debug)]
pub struct NnIndex<'a> {
    points: &'a PointSet,
    cells: [usize; 2],
    cell_size: [f64; 2],
    /// `start[c]..start[c + 1]` indexes `ids`/`coords` for bucket `c`.
    start: Vec<u32>,
    ids: Vec<u32>,
    coords: Vec<Point>,
}

const TARGET_PER_CELL: f64 = 2.0;
const MAX_CELLS_PER_AXIS: usize = 1 << 12;

/// Builds the index. Fails on an empty point set.
pub fn build_index(points: &PointSet) -> Result<NnIndex<'_>> {
    NnIndex::new(points)
}

impl<'a> NnIndex<'a> {
    pub fn new(points: &'a PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet("cannot index an empty point set".into()));
        }
        if points.len() > u32::MAX as usize {
            return Err(Error::invalid("point set too large to index"));
        }
        let domain = points.domain();
        let n = points.len() as f64;
        let [w, h] = domain.extent();
        let cells = if domain.dim() == 1 {
            [((n / TARGET_PER_CELL).ceil() as usize).clamp(1, MAX_CELLS_PER_AXIS * 16), 1]
        } else {
            let side = (domain.total_measure() * TARGET_PER_CELL / n).sqrt();
            [
                ((w / side).ceil() as usize).clamp(1, MAX_CELLS_PER_AXIS),
                ((h / side).ceil() as usize).clamp(1, MAX_CELLS_PER_AXIS),
            ]
        };
        let cell_size = [w / cells[0] as f64, if domain.dim() == 1 { 1.0 } else { h / cells[1] as f64 }];
        let mut index = NnIndex {
            points,
            cells,
            cell_size,
            start: Vec::new(),
            ids: Vec::new(),
            coords: Vec::new(),
        };
        // Counting sort by bucket; stable, so ids stay ascending within a bucket.
        let bucket: Vec<usize> = points.coords().iter().map(|p| index.cell_of(p)).collect();
        let total = cells[0] * cells[1];
        let mut start = vec![0u32; total + 1];
        for &b in &bucket {
            start[b + 1] += 1;
        }
        for c in 0..total {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut ids = vec![0u32; points.len()];
        for (id, &b) in bucket.iter().enumerate() {
            ids[fill[b] as usize] = id as u32;
            fill[b] += 1;
        }
        index.coords = ids.iter().map(|&i| points.coords()[i as usize]).collect();
        index.start = start;
        index.ids = ids;
        Ok(index)
    }

    pub fn points(&self) -> &'a PointSet {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn axis_cell(&self, axis: usize, v: f64) -> usize {
        let c = (v / self.cell_size[axis]).floor();
        if c <= 0.0 {
            0
        } else {
            (c as usize).min(self.cells[axis] - 1)
        }
    }

    fn cell_of(&self, p: &Point) -> usize {
        let cx = self.axis_cell(0, p[0]);
        let cy = if self.cells[1] > 1 { self.axis_cell(1, p[1]) } else { 0 };
        cy * self.cells[0] + cx
    }

    /// Offsets `[lo, hi]` (in cells) reachable along `axis` from cell `c`.
    fn offset_range(&self, axis: usize, c: usize) -> (isize, isize) {
        let n = self.cells[axis] as isize;
        match self.points.domain().boundary() {
            Boundary::Torus => (-((n - 1) / 2), n / 2),
            Boundary::Clipped => (-(c as isize), n - 1 - c as isize),
        }
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k > self.len() {
            return Err(Error::NotEnoughPoints { k, n: self.len() });
        }
        Ok(())
    }

    /// The `k` nearest points to `query`, ordered by distance then id.
    pub fn k_nearest(&self, query: &Point, k: usize) -> Result<Vec<Neighbor>> {
        let mut buf = Vec::with_capacity(k + 1);
        self.k_nearest_keys(query, k, &mut buf)?;
        Ok(buf
            .into_iter()
            .map(|(d2, id)| Neighbor {
                id: id as usize,
                distance: d2.sqrt(),
            })
            .collect())
    }

    /// Ids of the `k` nearest points, written into `out` (cleared first).
    pub fn k_nearest_ids(&self, query: &Point, k: usize, out: &mut Vec<u32>) -> Result<()> {
        let mut buf = Vec::with_capacity(k + 1);
        self.k_nearest_keys(query, k, &mut buf)?;
        out.clear();
        out.extend(buf.iter().map(|&(_, id)| id));
        Ok(())
    }

    /// Core search; leaves `(squared distance, id)` pairs sorted in `buf`.
    pub fn k_nearest_keys(
        &self,
        query: &Point,
        k: usize,
        buf: &mut Vec<(f64, u32)>,
    ) -> Result<()> {
        self.check_k(k)?;
        buf.clear();
        if k == 0 {
            return Ok(());
        }
        let domain = self.points.domain();
        let q = domain.wrap(*query);
        let cx = self.axis_cell(0, q[0]);
        let cy = if self.cells[1] > 1 { self.axis_cell(1, q[1]) } else { 0 };
        let (xlo, xhi) = self.offset_range(0, cx);
        let (ylo, yhi) = if self.cells[1] > 1 {
            self.offset_range(1, cy)
        } else {
            (0, 0)
        };
        let max_ring = [-xlo, xhi, -ylo, yhi].into_iter().max().unwrap_or(0);
        // Gap from the query to the walls of its own bucket.
        let mut gap = (q[0] - cx as f64 * self.cell_size[0])
            .min((cx + 1) as f64 * self.cell_size[0] - q[0]);
        let mut step = self.cell_size[0];
        if self.cells[1] > 1 {
            gap = gap
                .min(q[1] - cy as f64 * self.cell_size[1])
                .min((cy + 1) as f64 * self.cell_size[1] - q[1]);
            step = step.min(self.cell_size[1]);
        }
        let gap = gap.max(0.0);

        let visit = |dx: isize, dy: isize, buf: &mut Vec<(f64, u32)>| {
            let nx = self.cells[0] as isize;
            let ny = self.cells[1] as isize;
            let bx = (cx as isize + dx).rem_euclid(nx) as usize;
            let by = (cy as isize + dy).rem_euclid(ny) as usize;
            let b = by * self.cells[0] + bx;
            let (s, e) = (self.start[b] as usize, self.start[b + 1] as usize);
            for slot in s..e {
                let d2 = domain.distance_sq(&q, &self.coords[slot]);
                let key = (d2, self.ids[slot]);
                if buf.len() == k {
                    let last = buf[k - 1];
                    if !key_less(key, last) {
                        continue;
                    }
                    buf.pop();
                }
                let pos = buf.partition_point(|&other| key_less(other, key));
                buf.insert(pos, key);
            }
        };

        for r in 0..=max_ring {
            if r > 0 && buf.len() == k {
                let bound = (r - 1) as f64 * step + gap;
                // Strict, with slack for rounding in the wrapped distance.
                if buf[k - 1].0.sqrt() < bound * (1.0 - 1e-12) {
                    break;
                }
            }
            for dy in ylo.max(-r)..=yhi.min(r) {
                if dy.abs() == r {
                    for dx in xlo.max(-r)..=xhi.min(r) {
                        visit(dx, dy, buf);
                    }
                } else {
                    if -r >= xlo {
                        visit(-r, dy, buf);
                    }
                    if r != 0 && r <= xhi {
                        visit(r, dy, buf);
                    }
                }
            }
        }
        Ok(())
    }

    /// The `k` stations with the smallest shadowed distance `d / S`.
    ///
    /// One shadowing factor is drawn from `stream` for every point, in id
    /// order, so the ranking is a pure function of the stream state. With
    /// `sigma = 0` this is exactly [`NnIndex::k_nearest`].
    pub fn k_nearest_shadowed<R: Rng + ?Sized>(
        &self,
        query: &Point,
        k: usize,
        shadow: &ShadowConfig,
        stream: &mut R,
    ) -> Result<Vec<Neighbor>> {
        if shadow.sigma == 0.0 {
            return self.k_nearest(query, k);
        }
        let mut scratch = Vec::with_capacity(self.len());
        self.shadowed_keys(query, k, shadow, stream, &mut scratch)?;
        Ok(scratch
            .into_iter()
            .map(|(d, id)| Neighbor {
                id: id as usize,
                distance: d,
            })
            .collect())
    }

    /// Shadowed ranking into a caller-provided buffer of `(effective distance, id)`.
    pub fn shadowed_keys<R: Rng + ?Sized>(
        &self,
        query: &Point,
        k: usize,
        shadow: &ShadowConfig,
        stream: &mut R,
        scratch: &mut Vec<(f64, u32)>,
    ) -> Result<()> {
        self.check_k(k)?;
        let domain = self.points.domain();
        let q = domain.wrap(*query);
        scratch.clear();
        for (id, p) in self.points.coords().iter().enumerate() {
            let s = shadow.draw(stream);
            scratch.push((domain.distance(&q, p) / s, id as u32));
        }
        let cmp = |a: &(f64, u32), b: &(f64, u32)| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
        };
        if k < scratch.len() && k > 0 {
            scratch.select_nth_unstable_by(k - 1, cmp);
        }
        scratch.truncate(k);
        scratch.sort_unstable_by(cmp);
        Ok(())
    }
}

#[inline]
fn key_less(a: (f64, u32), b: (f64, u32)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Free-function form of [`NnIndex::k_nearest`].
pub fn k_nearest(index: &NnIndex<'_>, query: &Point, k: usize) -> Result<Vec<Neighbor>> {
    index.k_nearest(query, k)
}

/// Free-function form of [`NnIndex::k_nearest_shadowed`].
pub fn k_nearest_shadowed<R: Rng + ?Sized>(
    index: &NnIndex<'_>,
    query: &Point,
    k: usize,
    shadow: &ShadowConfig,
    stream: &mut R,
) -> Result<Vec<Neighbor>> {
    index.k_nearest_shadowed(query, k, shadow, stream)
}
