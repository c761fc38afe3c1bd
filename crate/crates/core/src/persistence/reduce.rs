//! Column reduction with clearing.
//!
//! Dimensions are reduced from the top down. When a (k+1)-column reduces to a
//! nonzero column with pivot row `i`, the k-cell `i` is a death cell and its
//! own column would reduce to zero, so it is skipped. Edges are never reduced
//! at all: the union-find pass already decided which edges are negative.
//!
//! Columns are sorted lists of row ranks (rank of the face among the cells of
//! its dimension), added with a symmetric-difference merge.

use crate::cubical::{CellOrder, FilteredComplex};

use super::union_find::h0_pass;
use super::{PersistenceConfig, PersistenceDiagram, PersistenceError, PersistencePair};

const NONE: u32 = u32::MAX;

struct DimensionResult {
    /// Pivot row per column, `NONE` for columns reduced to zero or skipped.
    low: Vec<u32>,
}

fn xor_into(acc: &[u32], other: &[u32], out: &mut Vec<u32>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < acc.len() && j < other.len() {
        match acc[i].cmp(&other[j]) {
            std::cmp::Ordering::Less => {
                out.push(acc[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(other[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&acc[i..]);
    out.extend_from_slice(&other[j..]);
}

fn reduce_dimension(
    complex: &FilteredComplex,
    order: &CellOrder,
    rank: &[u32],
    dim: usize,
    skip: &[bool],
    budget: &mut usize,
    cap: usize,
) -> Result<DimensionResult, PersistenceError> {
    let columns = order.dim(dim);
    let rows = order.dim(dim - 1).len();
    let mut pivot_of_row = vec![NONE; rows];
    let mut stored: Vec<Vec<u32>> = vec![Vec::new(); columns.len()];
    let mut low = vec![NONE; columns.len()];
    let mut col = Vec::with_capacity(8);
    let mut scratch = Vec::with_capacity(8);

    for (j, &(cell, _)) in columns.iter().enumerate() {
        if skip[j] {
            continue;
        }
        col.clear();
        col.extend(complex.boundary(cell).map(|f| rank[f as usize]));
        col.sort_unstable();
        while let Some(&pivot) = col.last() {
            let owner = pivot_of_row[pivot as usize];
            if owner == NONE {
                break;
            }
            xor_into(&col, &stored[owner as usize], &mut scratch);
            std::mem::swap(&mut col, &mut scratch);
        }
        if let Some(&pivot) = col.last() {
            pivot_of_row[pivot as usize] = j as u32;
            low[j] = pivot;
            *budget += col.len();
            if *budget > cap {
                return Err(PersistenceError::ReductionOverflow {
                    entries: *budget,
                    cap,
                });
            }
            stored[j] = col.clone();
        }
    }
    Ok(DimensionResult { low })
}

/// Computes the persistence diagram of `complex` (H0 through H2).
pub fn reduce_with_clearing(
    complex: &FilteredComplex,
    config: &PersistenceConfig,
) -> Result<PersistenceDiagram, PersistenceError> {
    let order = complex.sorted_cells();
    let h0 = h0_pass(complex, &order);
    let mut pairs = h0.pairs;

    let mut rank = vec![0u32; complex.num_cells()];
    for d in 0..4 {
        for (r, &(id, _)) in order.dim(d).iter().enumerate() {
            rank[id as usize] = r as u32;
        }
    }

    let mut budget = 0usize;
    let cap = config.max_column_entries;
    // killed[d][r]: the d-cell of rank r is the pivot of some (d+1)-column
    let mut killed: [Vec<bool>; 4] = std::array::from_fn(|d| vec![false; order.dim(d).len()]);

    for dim in [3usize, 2] {
        if order.dim(dim).is_empty() {
            continue;
        }
        let result = reduce_dimension(complex, &order, &rank, dim, &killed[dim], &mut budget, cap)?;
        let faces = order.dim(dim - 1);
        for (j, &pivot) in result.low.iter().enumerate() {
            let death = order.dim(dim)[j].1;
            if pivot != NONE {
                killed[dim - 1][pivot as usize] = true;
                let birth = faces[pivot as usize].1;
                if birth < death {
                    pairs.push(PersistencePair::new(dim - 1, birth, death));
                }
            } else if dim == 2 && !killed[2][j] {
                // a square whose column vanished and that no cube kills
                pairs.push(PersistencePair::essential(2, death));
            }
        }
    }

    // positive edges that no square kills are essential loops
    for (i, &(_, value)) in order.dim(1).iter().enumerate() {
        if !h0.negative_edges[i] && !killed[1][i] {
            pairs.push(PersistencePair::essential(1, value));
        }
    }

    Ok(PersistenceDiagram::new(pairs))
}
