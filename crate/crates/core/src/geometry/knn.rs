//! Exact k-nearest-neighbor search.
//!
//! Small clouds use a straight O(N²) scan; larger ones go through a uniform
//! grid. Both order candidates by `(squared distance, index)`, so the grid
//! returns exactly what brute force returns, ties included.

use std::cmp::Ordering;

use super::{dist2, Point3, PointCloud};
use crate::error::{Error, Result};

/// Clouds at or below this size are searched by brute force under [`KnnStrategy::Auto`].
pub const BRUTE_FORCE_LIMIT: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KnnStrategy {
    #[default]
    Auto,
    BruteForce,
    Grid,
}

/// Row-major `N×k` neighbor table plus the dilation used to build it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborIndex {
    indices: Vec<usize>,
    k: usize,
    dilation: usize,
}

impl NeighborIndex {
    /// Wraps an explicit table; every entry must be below `n_points`.
    pub fn from_table(indices: Vec<usize>, k: usize, dilation: usize, n_points: usize) -> Result<Self> {
        if k == 0 || indices.len() % k != 0 {
            return Err(Error::Argument(format!(
                "neighbor table of {} entries does not split into rows of {k}",
                indices.len()
            )));
        }
        if let Some(pos) = indices.iter().position(|&i| i >= n_points) {
            return Err(Error::Index {
                op: "NeighborIndex::from_table",
                row: pos / k,
                slot: pos % k,
                value: indices[pos],
                len: n_points,
            });
        }
        Ok(Self {
            indices,
            k,
            dilation,
        })
    }

    pub fn rows(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    /// Relabels the table for a reordered cloud where new point `i` is old
    /// point `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut indices = Vec::with_capacity(self.indices.len());
        for &old_row in perm {
            indices.extend(self.row(old_row).iter().map(|&j| inverse[j]));
        }
        Self {
            indices,
            k: self.k,
            dilation: self.dilation,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

/// Keeps the `k` smallest candidates in ascending order.
struct BestK {
    k: usize,
    items: Vec<Candidate>,
}

impl BestK {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn full(&self) -> bool {
        self.items.len() == self.k
    }

    fn worst(&self) -> f64 {
        self.items.last().map_or(f64::INFINITY, |c| c.d2)
    }

    fn offer(&mut self, c: Candidate) {
        if self.full() && c.cmp(self.items.last().unwrap()) != Ordering::Less {
            return;
        }
        let pos = self
            .items
            .partition_point(|x| x.cmp(&c) == Ordering::Less);
        self.items.insert(pos, c);
        if self.items.len() > self.k {
            self.items.pop();
        }
    }
}

/// Uniform grid over a point set, cells stored in CSR form.
pub(crate) struct Grid<'a> {
    points: &'a [Point3],
    origin: Point3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> Grid<'a> {
    /// `per_cell` is the target mean occupancy for a volume-filling cloud.
    pub(crate) fn build(points: &'a [Point3], per_cell: f64) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        let per_axis = ((points.len() as f64 / per_cell).cbrt()).max(1.0);
        let mut cell = if extent > 0.0 { extent / per_axis } else { 1.0 };
        // Flat clouds would otherwise blow up the cell count along thin axes.
        let mut dims = [1usize; 3];
        loop {
            for a in 0..3 {
                dims[a] = (((hi[a] - lo[a]) / cell).floor() as usize + 1).max(1);
            }
            if dims.iter().product::<usize>() <= 4 * points.len().max(1) {
                break;
            }
            cell *= 1.25;
        }
        let n_cells: usize = dims.iter().product();
        let mut counts = vec![0usize; n_cells + 1];
        let mut cell_of = Vec::with_capacity(points.len());
        let mut grid = Self {
            points,
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            items: Vec::new(),
        };
        for p in points {
            let c = grid.flat(grid.cell_coords(*p));
            cell_of.push(c);
            counts[c + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; points.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            items[fill[c]] = i;
            fill[c] += 1;
        }
        grid.starts = counts;
        grid.items = items;
        grid
    }

    fn cell_coords(&self, p: Point3) -> [usize; 3] {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.cell).floor();
            c[a] = if f <= 0.0 {
                0
            } else {
                (f as usize).min(self.dims[a] - 1)
            };
        }
        c
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_items(&self, c: [usize; 3]) -> &[usize] {
        let f = self.flat(c);
        &self.items[self.starts[f]..self.starts[f + 1]]
    }

    /// Visits every cell at Chebyshev ring `s` around `center`.
    fn for_ring(&self, center: [usize; 3], s: usize, mut f: impl FnMut(&[usize])) {
        let lo = |a: usize| center[a].saturating_sub(s);
        let hi = |a: usize| (center[a] + s).min(self.dims[a] - 1);
        for z in lo(2)..=hi(2) {
            for y in lo(1)..=hi(1) {
                let on_shell_zy = z.abs_diff(center[2]) == s || y.abs_diff(center[1]) == s;
                if on_shell_zy {
                    for x in lo(0)..=hi(0) {
                        f(self.cell_items([x, y, z]));
                    }
                } else {
                    // Interior of this row lies inside the already-visited cube.
                    if let Some(x) = center[0].checked_sub(s) {
                        f(self.cell_items([x, y, z]));
                    }
                    if center[0] + s < self.dims[0] {
                        f(self.cell_items([center[0] + s, y, z]));
                    }
                }
            }
        }
    }

    fn max_ring(&self, center: [usize; 3]) -> usize {
        (0..3)
            .map(|a| center[a].max(self.dims[a] - 1 - center[a]))
            .max()
            .unwrap_or(0)
    }

    /// Exact `k` nearest grid points to `q`, skipping `exclude` and any
    /// point for which `alive` is false.
    fn query(
        &self,
        q: Point3,
        k: usize,
        exclude: Option<usize>,
        alive: Option<&[bool]>,
    ) -> Vec<Candidate> {
        let center = self.cell_coords(q);
        let last = self.max_ring(center);
        let mut best = BestK::new(k);
        for s in 0..=last {
            self.for_ring(center, s, |items| {
                for &i in items {
                    if Some(i) == exclude || alive.is_some_and(|a| !a[i]) {
                        continue;
                    }
                    best.offer(Candidate {
                        d2: dist2(q, self.points[i]),
                        idx: i,
                    });
                }
            });
            // Points beyond ring s are at least s·cell away.
            let bound = s as f64 * self.cell;
            if best.full() && best.worst() < bound * bound {
                break;
            }
        }
        best.items
    }

    pub(crate) fn nearest_alive(&self, q: Point3, exclude: usize, alive: &[bool]) -> Option<(usize, f64)> {
        self.query(q, 1, Some(exclude), Some(alive))
            .first()
            .map(|c| (c.idx, c.d2))
    }
}

fn brute_row(points: &[Point3], q: Point3, k: usize, exclude: Option<usize>) -> Vec<Candidate> {
    let mut all: Vec<Candidate> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, p)| Candidate {
            d2: dist2(q, *p),
            idx: i,
        })
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k, |a, b| a.cmp(b));
        all.truncate(k);
    }
    all.sort_by(|a, b| a.cmp(b));
    all
}

fn check_k(n: usize, k: usize, include_self: bool) -> Result<()> {
    let available = if include_self { n } else { n.saturating_sub(1) };
    if k == 0 || k > available {
        return Err(Error::Argument(format!(
            "cannot take k={k} neighbors from {n} points ({})",
            if include_self { "self included" } else { "self excluded" }
        )));
    }
    Ok(())
}

/// The `k` nearest points of every point, ascending by distance, ties by index.
pub fn knn(cloud: &PointCloud, k: usize, include_self: bool) -> Result<NeighborIndex> {
    knn_with(cloud, k, include_self, KnnStrategy::Auto)
}

pub fn knn_with(
    cloud: &PointCloud,
    k: usize,
    include_self: bool,
    strategy: KnnStrategy,
) -> Result<NeighborIndex> {
    let pts = cloud.points();
    let n = pts.len();
    check_k(n, k, include_self)?;
    let use_grid = match strategy {
        KnnStrategy::Auto => n > BRUTE_FORCE_LIMIT,
        KnnStrategy::BruteForce => false,
        KnnStrategy::Grid => true,
    };
    let mut indices = Vec::with_capacity(n * k);
    if use_grid {
        let grid = Grid::build(pts, 2.0);
        for (i, &p) in pts.iter().enumerate() {
            let exclude = (!include_self).then_some(i);
            indices.extend(grid.query(p, k, exclude, None).iter().map(|c| c.idx));
        }
    } else {
        for (i, &p) in pts.iter().enumerate() {
            let exclude = (!include_self).then_some(i);
            indices.extend(brute_row(pts, p, k, exclude).iter().map(|c| c.idx));
        }
    }
    Ok(NeighborIndex {
        indices,
        k,
        dilation: 1,
    })
}

/// Every `d`-th of the `k·d` nearest neighbors: ranks `0, d, …, (k−1)·d`.
pub fn dilated_neighbors(
    cloud: &PointCloud,
    k: usize,
    d: usize,
    include_self: bool,
) -> Result<NeighborIndex> {
    if d == 0 {
        return Err(Error::Argument("dilation must be at least 1".into()));
    }
    let full = knn(cloud, k * d, include_self)?;
    if d == 1 {
        return Ok(full);
    }
    let indices = (0..full.rows())
        .flat_map(|i| full.row(i).iter().step_by(d).copied().collect::<Vec<_>>())
        .collect();
    Ok(NeighborIndex {
        indices,
        k,
        dilation: d,
    })
}

/// Nearest target of every query as `(index, squared distance)`, ties to the
/// lowest target index.
pub fn nearest_neighbors(queries: &[Point3], targets: &[Point3], strategy: KnnStrategy) -> Vec<(usize, f64)> {
    assert!(!targets.is_empty(), "nearest_neighbors needs at least one target");
    let use_grid = match strategy {
        KnnStrategy::Auto => targets.len() > BRUTE_FORCE_LIMIT,
        KnnStrategy::BruteForce => false,
        KnnStrategy::Grid => true,
    };
    if use_grid {
        let grid = Grid::build(targets, 2.0);
        queries
            .iter()
            .map(|&q| {
                let c = grid.query(q, 1, None, None)[0];
                (c.idx, c.d2)
            })
            .collect()
    } else {
        queries
            .iter()
            .map(|&q| {
                let mut best = (0usize, f64::INFINITY);
                for (i, &t) in targets.iter().enumerate() {
                    let d = dist2(q, t);
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                best
            })
            .collect()
    }
}
