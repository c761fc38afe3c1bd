//! Persistence diagrams of cubical sublevel filtrations.
//!
//! [`reduce_with_clearing`] is the production path: union-find for H0 and
//! top-down column reduction with clearing for H1/H2. [`naive_reduce`] is the
//! textbook reduction of the whole boundary matrix and exists to check it.

mod naive;
mod reduce;
mod union_find;

use std::fmt::Write as _;

use thiserror::Error;

use crate::cubical::{ComplexConfig, ComplexError, FilteredComplex};
use crate::format::fmt_f64;
use crate::grid::ScalarGrid;

pub use naive::{naive_reduce, ORACLE_MAX_CELLS};
pub use reduce::reduce_with_clearing;
pub use union_find::h0_union_find;

/// Betti numbers (β₀, β₁, β₂).
pub type BettiTriple = [usize; 3];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PersistenceError {
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("column workspace holds {entries} entries, above the cap of {cap}")]
    ReductionOverflow { entries: usize, cap: usize },
    #[error("oracle reduction limited to {cap} cells, complex has {cells}")]
    OracleTooLarge { cells: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistenceConfig {
    pub complex: ComplexConfig,
    /// Cap on the total number of entries kept in reduced columns.
    pub max_column_entries: usize,
}

impl Default for PersistenceConfig {
    fn default() -> Self {
        Self {
            complex: ComplexConfig::default(),
            max_column_entries: 1 << 28,
        }
    }
}

/// One interval `[birth, death)` in homology dimension `dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistencePair {
    pub dim: usize,
    pub birth: f64,
    /// `f64::INFINITY` for essential classes.
    pub death: f64,
}

impl PersistencePair {
    pub fn new(dim: usize, birth: f64, death: f64) -> Self {
        Self { dim, birth, death }
    }

    pub fn essential(dim: usize, birth: f64) -> Self {
        Self::new(dim, birth, f64::INFINITY)
    }

    pub fn is_essential(&self) -> bool {
        self.death.is_infinite()
    }

    /// Whether the class is alive at `eta` under the half-open convention.
    pub fn alive_at(&self, eta: f64) -> bool {
        self.birth <= eta && eta < self.death
    }

    fn cmp_canonical(&self, other: &Self) -> std::cmp::Ordering {
        self.dim
            .cmp(&other.dim)
            .then(self.birth.total_cmp(&other.birth))
            .then(self.death.total_cmp(&other.death))
    }
}

/// A multiset of intervals, kept sorted by (dim, birth, death) so that equal
/// multisets compare equal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PersistenceDiagram {
    pairs: Vec<PersistencePair>,
}

impl PersistenceDiagram {
    /// Builds a diagram, dropping zero-persistence pairs.
    pub fn new(pairs: impl IntoIterator<Item = PersistencePair>) -> Self {
        let mut pairs: Vec<PersistencePair> =
            pairs.into_iter().filter(|p| p.birth < p.death).collect();
        pairs.sort_by(PersistencePair::cmp_canonical);
        Self { pairs }
    }

    pub fn pairs(&self) -> &[PersistencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn of_dim(&self, dim: usize) -> impl Iterator<Item = &PersistencePair> {
        self.pairs.iter().filter(move |p| p.dim == dim)
    }

    /// β_k(η) = #{(k, b, d) : b ≤ η < d} for k = 0, 1, 2.
    pub fn betti_at(&self, eta: f64) -> BettiTriple {
        let mut betti = [0; 3];
        for p in &self.pairs {
            if p.dim < 3 && p.alive_at(eta) {
                betti[p.dim] += 1;
            }
        }
        betti
    }

    /// Smallest birth over all pairs.
    pub fn min_birth(&self) -> Option<f64> {
        self.pairs.iter().map(|p| p.birth).min_by(f64::total_cmp)
    }

    /// Largest finite death over all pairs.
    pub fn max_finite_death(&self) -> Option<f64> {
        self.pairs
            .iter()
            .map(|p| p.death)
            .filter(|d| d.is_finite())
            .max_by(f64::total_cmp)
    }

    /// Applies a strictly increasing map to every endpoint.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.pairs.iter().map(|p| PersistencePair {
            dim: p.dim,
            birth: f(p.birth),
            death: if p.is_essential() { p.death } else { f(p.death) },
        }))
    }

    /// CSV with header `dim,birth,death`; essential classes die at `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dim,birth,death\n");
        for p in &self.pairs {
            writeln!(out, "{},{},{}", p.dim, fmt_f64(p.birth), fmt_f64(p.death)).unwrap();
        }
        out
    }
}

/// Builds the complex of `grid` and computes its diagram.
pub fn diagram(grid: &ScalarGrid) -> Result<PersistenceDiagram, PersistenceError> {
    diagram_with(grid, &PersistenceConfig::default())
}

pub fn diagram_with(
    grid: &ScalarGrid,
    config: &PersistenceConfig,
) -> Result<PersistenceDiagram, PersistenceError> {
    let complex = FilteredComplex::build_with(grid, &config.complex)?;
    reduce_with_clearing(&complex, config)
}
