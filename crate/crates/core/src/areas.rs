//! Higher-order Voronoi areas `X_j(i)`: the measure of the region where
//! point `i` is exactly the `j`-th nearest point.
//!
//! In 2D the areas are estimated on a lattice of square cells: every cell
//! center is ranked against the point set and the cell's area is credited to
//! the `j`-th nearest point at order `j`. In 1D they are computed exactly
//! from the gaps between consecutive points.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Boundary, PointSet};
use crate::knn::NnIndex;
use crate::{Error, Result};

/// How an [`AreaTable`] was obtained.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Resolution {
    /// Exact interval lengths (1D).
    Exact,
    /// Cell-center sampling; `pitch` is the realized cell side per axis.
    Lattice {
        epsilon: f64,
        cells: [usize; 2],
        pitch: [f64; 2],
    },
}

/// Per-point areas for orders `1..=k_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct AreaTable {
    points: PointSet,
    k_max: usize,
    /// Row-major `[point][order - 1]`.
    areas: Vec<f64>,
    /// Cell counts behind `areas` for lattice tables.
    counts: Option<Vec<u64>>,
    resolution: Resolution,
}

impl AreaTable {
    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    /// Sampling pitch requested for a lattice table, `None` when exact.
    pub fn epsilon(&self) -> Option<f64> {
        match self.resolution {
            Resolution::Exact => None,
            Resolution::Lattice { epsilon, .. } => Some(epsilon),
        }
    }

    /// Area of one sample cell, `None` when exact.
    pub fn cell_area(&self) -> Option<f64> {
        match self.resolution {
            Resolution::Exact => None,
            Resolution::Lattice { pitch, .. } => Some(pitch[0] * pitch[1]),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `X_j(i)` for `1 <= j <= k_max`.
    pub fn area(&self, i: usize, j: usize) -> f64 {
        assert!(j >= 1 && j <= self.k_max, "order {j} outside 1..={}", self.k_max);
        self.areas[i * self.k_max + j - 1]
    }

    /// `X_{<=k}(i)`.
    pub fn cumulative(&self, i: usize, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.k_max, "order {k} outside 1..={}", self.k_max);
        self.areas[i * self.k_max..i * self.k_max + k].iter().sum()
    }

    /// Number of sample cells credited to point `i` at order `j`.
    pub fn count(&self, i: usize, j: usize) -> Option<u64> {
        self.counts.as_ref().map(|c| c[i * self.k_max + j - 1])
    }

    /// Sum of `X_j(i)` over all points.
    pub fn order_total(&self, j: usize) -> f64 {
        (0..self.len()).map(|i| self.area(i, j)).sum()
    }

    /// Total cell count at order `j` (lattice tables).
    pub fn order_count(&self, j: usize) -> Option<u64> {
        self.counts
            .as_ref()
            .map(|c| (0..self.len()).map(|i| c[i * self.k_max + j - 1]).sum())
    }

    /// CSV with header `point_id,order,area`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["point_id", "order", "area"]).map_err(csv_err)?;
        for i in 0..self.len() {
            for j in 1..=self.k_max {
                w.write_record([i.to_string(), j.to_string(), fmt_f64(self.area(i, j))])
                    .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

/// Shortest decimal that round-trips.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn check_orders(points: &PointSet, k_max: usize) -> Result<()> {
    if k_max == 0 {
        return Err(Error::invalid("k_max must be >= 1"));
    }
    points.require(k_max)
}

/// Lattice geometry for sampling pitch `epsilon`: `ceil(extent / epsilon)`
/// cells per axis, so the realized side never exceeds `epsilon` and the cells
/// tile the domain exactly.
pub fn lattice_for(points: &PointSet, epsilon: f64) -> Result<([usize; 2], [f64; 2])> {
    let domain = points.domain();
    if domain.dim() != 2 {
        return Err(Error::invalid(
            "lattice sampling is for 2D domains; use exact_areas_1d in 1D",
        ));
    }
    let [w, h] = domain.extent();
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    if epsilon > w.min(h) {
        return Err(Error::invalid(format!(
            "epsilon {epsilon} exceeds the domain extent {w} x {h}"
        )));
    }
    let cells = [(w / epsilon).ceil() as usize, (h / epsilon).ceil() as usize];
    Ok((cells, [w / cells[0] as f64, h / cells[1] as f64]))
}

fn count_rows(
    index: &NnIndex<'_>,
    k_max: usize,
    cells: [usize; 2],
    pitch: [f64; 2],
    rows: std::ops::Range<usize>,
    counts: &mut [u64],
    buf: &mut Vec<(f64, u32)>,
) -> Result<()> {
    for r in rows {
        let y = (r as f64 + 0.5) * pitch[1];
        for c in 0..cells[0] {
            let x = (c as f64 + 0.5) * pitch[0];
            index.k_nearest_keys(&[x, y], k_max, buf)?;
            for (j, &(_, id)) in buf.iter().enumerate() {
                counts[id as usize * k_max + j] += 1;
            }
        }
    }
    Ok(())
}

fn table_from_counts(
    points: &PointSet,
    k_max: usize,
    epsilon: f64,
    cells: [usize; 2],
    pitch: [f64; 2],
    counts: Vec<u64>,
) -> AreaTable {
    let cell = pitch[0] * pitch[1];
    AreaTable {
        points: points.clone(),
        k_max,
        areas: counts.iter().map(|&c| c as f64 * cell).collect(),
        counts: Some(counts),
        resolution: Resolution::Lattice {
            epsilon,
            cells,
            pitch,
        },
    }
}

/// Lattice estimate of `X_j(i)` for `j <= k_max`, parallel over cell rows.
///
/// Per-thread integer counts are merged by addition, so the table does not
/// depend on the number of threads.
pub fn estimate_areas_2d(
    points: &PointSet,
    k_max: usize,
    epsilon: f64,
    index: &NnIndex<'_>,
) -> Result<AreaTable> {
    check_orders(points, k_max)?;
    let (cells, pitch) = lattice_for(points, epsilon)?;
    let slots = points.len() * k_max;
    let counts = (0..cells[1])
        .into_par_iter()
        .try_fold(
            || (vec![0u64; slots], Vec::with_capacity(k_max + 1)),
            |(mut counts, mut buf), r| {
                count_rows(index, k_max, cells, pitch, r..r + 1, &mut counts, &mut buf)?;
                Ok::<_, Error>((counts, buf))
            },
        )
        .map(|res| res.map(|(c, _)| c))
        .try_reduce(
            || vec![0u64; slots],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    Ok(table_from_counts(points, k_max, epsilon, cells, pitch, counts))
}

/// Single-threaded [`estimate_areas_2d`], for callers that parallelize over
/// many small point sets.
pub fn estimate_areas_2d_serial(
    points: &PointSet,
    k_max: usize,
    epsilon: f64,
    index: &NnIndex<'_>,
) -> Result<AreaTable> {
    check_orders(points, k_max)?;
    let (cells, pitch) = lattice_for(points, epsilon)?;
    let mut counts = vec![0u64; points.len() * k_max];
    let mut buf = Vec::with_capacity(k_max + 1);
    count_rows(index, k_max, cells, pitch, 0..cells[1], &mut counts, &mut buf)?;
    Ok(table_from_counts(points, k_max, epsilon, cells, pitch, counts))
}

/// Exact 1D areas on a circle: with gaps `D_s = B_s - B_{s-1}` between
/// consecutive sorted points, `X_k(i) = (D_{s-k+1} + D_{s+k}) / 2` where `s`
/// is the sorted position of `i` and indices are cyclic.
pub fn exact_areas_1d(points: &PointSet, k_max: usize) -> Result<AreaTable> {
    let domain = points.domain();
    if domain.dim() != 1 {
        return Err(Error::invalid("exact_areas_1d needs a 1D domain"));
    }
    if domain.boundary() != Boundary::Torus {
        return Err(Error::invalid("exact_areas_1d needs a torus (circle) domain"));
    }
    check_orders(points, k_max)?;
    let n = points.len();
    if n < 2 * k_max + 1 {
        return Err(Error::NotEnoughPoints {
            k: 2 * k_max + 1,
            n,
        });
    }
    let len = domain.extent()[0];
    let xs = points.coords();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a][0].total_cmp(&xs[b][0]).then(a.cmp(&b)));
    // gaps[s] = B_s - B_{s-1}
    let gaps: Vec<f64> = (0..n)
        .map(|s| {
            let prev = if s == 0 {
                xs[order[n - 1]][0] - len
            } else {
                xs[order[s - 1]][0]
            };
            xs[order[s]][0] - prev
        })
        .collect();
    let gap = |s: isize| gaps[s.rem_euclid(n as isize) as usize];
    let mut areas = vec![0.0; n * k_max];
    for (s, &id) in order.iter().enumerate() {
        let s = s as isize;
        for k in 1..=k_max {
            let ki = k as isize;
            areas[id * k_max + k - 1] = 0.5 * (gap(s - ki + 1) + gap(s + ki));
        }
    }
    Ok(AreaTable {
        points: points.clone(),
        k_max,
        areas,
        counts: None,
        resolution: Resolution::Exact,
    })
}

/// Which area to extract per point.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum OrderSelector {
    /// `X_j(i)`.
    Exact(usize),
    /// `X_{<=k}(i)`.
    Cumulative(usize),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Meters or square meters.
    #[default]
    Raw,
    /// Divided by the mean cell size `A_tot / N`, so `E[X_{<=k}] = k`.
    UnitMean,
}

/// One value per point for the selected order.
pub fn area_samples(
    table: &AreaTable,
    selector: OrderSelector,
    normalization: Normalization,
) -> Result<Vec<f64>> {
    area_samples_guarded(table, selector, normalization, 0.0)
}

/// [`area_samples`] skipping points closer than `margin` to the boundary of
/// a clipped domain, whose cells are truncated. The margin is ignored on a
/// torus.
pub fn area_samples_guarded(
    table: &AreaTable,
    selector: OrderSelector,
    normalization: Normalization,
    margin: f64,
) -> Result<Vec<f64>> {
    let order = match selector {
        OrderSelector::Exact(j) | OrderSelector::Cumulative(j) => j,
    };
    if order == 0 || order > table.k_max {
        return Err(Error::invalid(format!(
            "order {order} outside the table's 1..={}",
            table.k_max
        )));
    }
    let domain = table.points.domain();
    let scale = match normalization {
        Normalization::Raw => 1.0,
        Normalization::UnitMean => table.len() as f64 / domain.total_measure(),
    };
    let guarded = domain.boundary() == Boundary::Clipped && margin > 0.0;
    let ext = domain.extent();
    Ok(table
        .points
        .coords()
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            !guarded
                || (0..domain.dim()).all(|a| p[a] >= margin && p[a] <= ext[a] - margin)
        })
        .map(|(i, _)| {
            let v = match selector {
                OrderSelector::Exact(j) => table.area(i, j),
                OrderSelector::Cumulative(k) => table.cumulative(i, k),
            };
            v * scale
        })
        .collect())
}

/// Empirical CDF of `samples` at each abscissa of `grid`.
pub fn ecdf_at(samples: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len().max(1) as f64;
    grid.iter()
        .map(|&x| xs.partition_point(|&v| v <= x) as f64 / n)
        .collect()
}

/// CSV `x,k,ecdf` of the unit-mean `X_{<=k}` law for each `k` in `ks`.
pub fn write_ecdf_csv<W: Write>(
    table: &AreaTable,
    ks: &[usize],
    grid: &[f64],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "k", "ecdf"]).map_err(csv_err)?;
    for &k in ks {
        let samples = area_samples(table, OrderSelector::Cumulative(k), Normalization::UnitMean)?;
        for (x, f) in grid.iter().zip(ecdf_at(&samples, grid)) {
            w.write_record([fmt_f64(*x), k.to_string(), fmt_f64(f)])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}
