//! H0 by union-find over the edges in filtration order.

use crate::cubical::{CellOrder, FilteredComplex};

use super::PersistencePair;

struct Components {
    parent: Vec<usize>,
    rank: Vec<u8>,
    /// Oldest vertex of each root's component.
    oldest: Vec<usize>,
}

impl Components {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            oldest: (0..n).collect(),
        }
    }

    fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != node {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    fn link(&mut self, a: usize, b: usize, oldest: usize) {
        let (hi, lo) = if self.rank[a] >= self.rank[b] { (a, b) } else { (b, a) };
        self.parent[lo] = hi;
        if self.rank[a] == self.rank[b] {
            self.rank[hi] = self.rank[hi].saturating_add(1);
        }
        self.oldest[hi] = oldest;
    }
}

pub(crate) struct H0Pass {
    pub pairs: Vec<PersistencePair>,
    /// Per edge in `order.dim(1)`: true when the edge merged two components.
    pub negative_edges: Vec<bool>,
}

pub(crate) fn h0_pass(complex: &FilteredComplex, order: &CellOrder) -> H0Pass {
    let [a, b, c] = complex.shape();
    let mut comps = Components::new(a * b * c);
    // vertex slots increase with anchor order, so (value, slot) is the cell order
    let older = |x: usize, y: usize| {
        complex
            .vertex_value_at(x)
            .total_cmp(&complex.vertex_value_at(y))
            .then(x.cmp(&y))
            .is_lt()
    };

    let edges = order.dim(1);
    let mut pairs = Vec::new();
    let mut negative_edges = vec![false; edges.len()];
    for (i, &(edge, value)) in edges.iter().enumerate() {
        let mut ends = complex.boundary(edge);
        let u = complex.vertex_slot(ends.next().expect("edge has two faces"));
        let v = complex.vertex_slot(ends.next().expect("edge has two faces"));
        let (ru, rv) = (comps.find(u), comps.find(v));
        if ru == rv {
            continue;
        }
        negative_edges[i] = true;
        let (ou, ov) = (comps.oldest[ru], comps.oldest[rv]);
        let (survivor, younger) = if older(ou, ov) { (ou, ov) } else { (ov, ou) };
        let birth = complex.vertex_value_at(younger);
        if birth < value {
            pairs.push(PersistencePair::new(0, birth, value));
        }
        comps.link(ru, rv, survivor);
    }

    for slot in 0..a * b * c {
        if comps.find(slot) == slot {
            pairs.push(PersistencePair::essential(
                0,
                complex.vertex_value_at(comps.oldest[slot]),
            ));
        }
    }

    H0Pass {
        pairs,
        negative_edges,
    }
}

/// H0 intervals by the elder rule: when two components meet, the younger
/// one dies at the value of the joining edge.
pub fn h0_union_find(complex: &FilteredComplex) -> Vec<PersistencePair> {
    h0_pass(complex, &complex.sorted_cells()).pairs
}
