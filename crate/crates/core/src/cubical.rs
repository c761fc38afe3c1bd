//! Filtered cubical complexes over 2D/3D grids.
//!
//! Grid values sit on vertices and every elementary cube takes the maximum of
//! its corner values, so the sublevel sets of the filtration are exactly the
//! sublevel sets of the field.
//!
//! Cells are never stored. A cell is identified by its position in the doubled
//! grid: along axis `i` a vertex `a` sits at coordinate `2a` and the edge from
//! `a` to `a + 1` sits at `2a + 1`. Odd coordinates therefore mark spanned
//! axes, every point of the doubled grid is a cell, and the row-major index of
//! that point is the [`CellId`].

use std::cmp::Ordering;

use thiserror::Error;

use crate::grid::ScalarGrid;

pub type CellId = u32;

/// Largest cell count accepted by default.
pub const DEFAULT_MAX_CELLS: u64 = 1 << 31;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComplexError {
    #[error("grid would produce {cells} cells, above the cap of {cap}")]
    GridTooLarge { cells: u64, cap: u64 },
}

/// An elementary cube: a vertex anchor plus the set of axes it spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cube {
    pub anchor: [usize; 3],
    /// Bit `i` set when the cube extends one step along axis `i`.
    pub axes: u8,
}

impl Cube {
    pub fn new(anchor: [usize; 3], axes: u8) -> Self {
        Self { anchor, axes }
    }

    pub fn vertex(anchor: [usize; 3]) -> Self {
        Self { anchor, axes: 0 }
    }

    pub fn dim(&self) -> usize {
        self.axes.count_ones() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexConfig {
    pub max_cells: u64,
}

impl Default for ComplexConfig {
    fn default() -> Self {
        Self {
            max_cells: DEFAULT_MAX_CELLS,
        }
    }
}

/// The V-construction sublevel filtration of a grid.
#[derive(Debug, Clone)]
pub struct FilteredComplex {
    /// Vertex counts per axis, padded with 1.
    shape: [usize; 3],
    /// Doubled extents `2n - 1`.
    ext: [usize; 3],
    /// Row-major strides in the doubled grid.
    stride: [usize; 3],
    values: Vec<f64>,
}

impl FilteredComplex {
    pub fn build(grid: &ScalarGrid) -> Result<Self, ComplexError> {
        Self::build_with(grid, &ComplexConfig::default())
    }

    pub fn build_with(grid: &ScalarGrid, config: &ComplexConfig) -> Result<Self, ComplexError> {
        let shape = grid.dims3();
        let ext = shape.map(|n| 2 * n - 1);
        let cells = ext.iter().map(|&e| e as u64).product::<u64>();
        let cap = config.max_cells.min(u64::from(CellId::MAX) + 1);
        if cells > cap {
            return Err(ComplexError::GridTooLarge { cells, cap });
        }
        Ok(Self {
            shape,
            ext,
            stride: [ext[1] * ext[2], ext[2], 1],
            values: grid.values().to_vec(),
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn num_cells(&self) -> usize {
        self.ext.iter().product()
    }

    /// Number of cells of dimension `dim`.
    pub fn count(&self, dim: usize) -> usize {
        // per axis: n vertices-positions, n - 1 edge-positions
        let mut total = 0;
        for axes in 0u8..8 {
            if axes.count_ones() as usize != dim {
                continue;
            }
            total += (0..3)
                .map(|i| {
                    if axes & (1 << i) != 0 {
                        self.shape[i] - 1
                    } else {
                        self.shape[i]
                    }
                })
                .product::<usize>();
        }
        total
    }

    fn coords(&self, id: CellId) -> [usize; 3] {
        let id = id as usize;
        [
            id / self.stride[0],
            (id / self.stride[1]) % self.ext[1],
            id % self.ext[2],
        ]
    }

    pub fn cube(&self, id: CellId) -> Cube {
        let c = self.coords(id);
        let axes = (0..3).fold(0u8, |m, i| m | (((c[i] & 1) as u8) << i));
        Cube {
            anchor: c.map(|x| x / 2),
            axes,
        }
    }

    /// Cell id of `cube`, or `None` when it does not fit inside the grid.
    pub fn id_of(&self, cube: &Cube) -> Option<CellId> {
        let mut id = 0;
        for i in 0..3 {
            let c = 2 * cube.anchor[i] + usize::from(cube.axes & (1 << i) != 0);
            if c >= self.ext[i] {
                return None;
            }
            id += c * self.stride[i];
        }
        Some(id as CellId)
    }

    /// Row-major index into the grid of the anchor vertex of `id`.
    pub fn vertex_slot(&self, id: CellId) -> usize {
        let a = self.coords(id).map(|x| x / 2);
        (a[0] * self.shape[1] + a[1]) * self.shape[2] + a[2]
    }

    pub fn vertex_value_at(&self, slot: usize) -> f64 {
        self.values[slot]
    }

    pub fn dim_of(&self, id: CellId) -> usize {
        self.coords(id).iter().filter(|&&c| c & 1 == 1).count()
    }

    fn axes_of(c: &[usize; 3]) -> u8 {
        (0..3).fold(0u8, |m, i| m | (((c[i] & 1) as u8) << i))
    }

    fn vertex_value(&self, v: [usize; 3]) -> f64 {
        self.values[(v[0] * self.shape[1] + v[1]) * self.shape[2] + v[2]]
    }

    /// Filtration value: the maximum over the cube's corners.
    pub fn filtration(&self, id: CellId) -> f64 {
        let c = self.coords(id);
        let anchor = c.map(|x| x / 2);
        let axes = Self::axes_of(&c);
        let mut best = f64::NEG_INFINITY;
        // iterate over subsets of `axes`, including the empty one
        let mut sub = axes;
        loop {
            let corner = [
                anchor[0] + usize::from(sub & 1 != 0),
                anchor[1] + usize::from(sub & 2 != 0),
                anchor[2] + usize::from(sub & 4 != 0),
            ];
            best = best.max(self.vertex_value(corner));
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & axes;
        }
        best
    }

    /// Faces of `id`, each spanned axis collapsed to its low then high end.
    pub fn boundary(&self, id: CellId) -> Boundary {
        let c = self.coords(id);
        let mut faces = [0 as CellId; 6];
        let mut len = 0;
        for i in 0..3 {
            if c[i] & 1 == 1 {
                let s = self.stride[i] as CellId;
                faces[len] = id - s;
                faces[len + 1] = id + s;
                len += 2;
            }
        }
        Boundary { faces, len, pos: 0 }
    }

    /// Boundary expressed as cubes.
    pub fn boundary_cubes(&self, cube: &Cube) -> Vec<Cube> {
        match self.id_of(cube) {
            Some(id) => self.boundary(id).map(|f| self.cube(f)).collect(),
            None => Vec::new(),
        }
    }

    /// All cell ids of dimension `dim`, in id order.
    pub fn cells_of_dim(&self, dim: usize) -> impl Iterator<Item = CellId> + '_ {
        (0..self.num_cells() as CellId).filter(move |&id| self.dim_of(id) == dim)
    }

    /// Secondary sort key within one dimension: anchor (row-major), then axes.
    fn tie_key(&self, id: CellId) -> u64 {
        let c = self.coords(id);
        let anchor = c.map(|x| x / 2);
        let flat = (anchor[0] * self.shape[1] + anchor[1]) * self.shape[2] + anchor[2];
        (flat as u64) << 3 | u64::from(Self::axes_of(&c))
    }

    /// Compares two cells by (filtration, dim, anchor, axes).
    pub fn cmp_cells(&self, a: CellId, b: CellId) -> Ordering {
        self.filtration(a)
            .total_cmp(&self.filtration(b))
            .then(self.dim_of(a).cmp(&self.dim_of(b)))
            .then(self.tie_key(a).cmp(&self.tie_key(b)))
    }

    /// The deterministic total order on cells, kept per dimension.
    pub fn sorted_cells(&self) -> CellOrder {
        let mut keyed: [Vec<(f64, u64, CellId)>; 4] = Default::default();
        for id in 0..self.num_cells() as CellId {
            let d = self.dim_of(id);
            keyed[d].push((self.filtration(id), self.tie_key(id), id));
        }
        let by_dim = keyed.map(|mut v| {
            v.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v.into_iter().map(|(f, _, id)| (id, f)).collect()
        });
        CellOrder { by_dim }
    }
}

/// Up to six faces, yielded without allocation.
#[derive(Debug, Clone)]
pub struct Boundary {
    faces: [CellId; 6],
    len: usize,
    pos: usize,
}

impl Iterator for Boundary {
    type Item = CellId;

    fn next(&mut self) -> Option<CellId> {
        (self.pos < self.len).then(|| {
            self.pos += 1;
            self.faces[self.pos - 1]
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.len - self.pos;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Boundary {}

/// Cells sorted by (filtration, dim, anchor, axes), stored per dimension with
/// their filtration values.
#[derive(Debug, Clone)]
pub struct CellOrder {
    by_dim: [Vec<(CellId, f64)>; 4],
}

impl CellOrder {
    /// Cells of one dimension in order, with filtration values.
    pub fn dim(&self, dim: usize) -> &[(CellId, f64)] {
        &self.by_dim[dim]
    }

    pub fn len(&self) -> usize {
        self.by_dim.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The full order across dimensions: `(cell, dim, filtration)`.
    pub fn global(&self) -> Vec<(CellId, usize, f64)> {
        let mut cursor = [0usize; 4];
        let mut out = Vec::with_capacity(self.len());
        loop {
            // lowest filtration wins; ties go to the lower dimension
            let mut pick: Option<(usize, f64)> = None;
            for d in 0..4 {
                if let Some(&(_, f)) = self.by_dim[d].get(cursor[d]) {
                    if pick.is_none_or(|(_, best)| f.total_cmp(&best) == Ordering::Less) {
                        pick = Some((d, f));
                    }
                }
            }
            let Some((d, f)) = pick else { break };
            out.push((self.by_dim[d][cursor[d]].0, d, f));
            cursor[d] += 1;
        }
        out
    }
}
