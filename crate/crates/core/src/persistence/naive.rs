//! Textbook reduction of the full boundary matrix, used as a reference.

use std::collections::{BTreeSet, HashMap};

use crate::cubical::FilteredComplex;

use super::{PersistenceDiagram, PersistenceError, PersistencePair};

pub const ORACLE_MAX_CELLS: usize = 10_000;

/// Reduces every column left to right in cell order, without clearing and
/// without the union-find shortcut for H0.
pub fn naive_reduce(complex: &FilteredComplex) -> Result<PersistenceDiagram, PersistenceError> {
    let cells = complex.num_cells();
    if cells > ORACLE_MAX_CELLS {
        return Err(PersistenceError::OracleTooLarge {
            cells,
            cap: ORACLE_MAX_CELLS,
        });
    }

    let order = complex.sorted_cells().global();
    let mut position = vec![0usize; cells];
    for (pos, &(id, _, _)) in order.iter().enumerate() {
        position[id as usize] = pos;
    }

    let mut columns: Vec<BTreeSet<usize>> = order
        .iter()
        .map(|&(id, _, _)| complex.boundary(id).map(|f| position[f as usize]).collect())
        .collect();

    let mut owner_of_low: HashMap<usize, usize> = HashMap::new();
    for j in 0..columns.len() {
        while let Some(&low) = columns[j].last() {
            let Some(&k) = owner_of_low.get(&low) else {
                break;
            };
            let other = columns[k].clone();
            let col = &mut columns[j];
            *col = col.symmetric_difference(&other).copied().collect();
        }
        if let Some(&low) = columns[j].last() {
            owner_of_low.insert(low, j);
        }
    }

    let mut pairs = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let (_, dim, value) = order[j];
        match col.last() {
            Some(&low) => {
                let (_, low_dim, birth) = order[low];
                pairs.push(PersistencePair::new(low_dim, birth, value));
            }
            None if !owner_of_low.contains_key(&j) && dim < 3 => {
                pairs.push(PersistencePair::essential(dim, value));
            }
            None => {}
        }
    }
    Ok(PersistenceDiagram::new(pairs))
}
