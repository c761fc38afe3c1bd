//! Test-only oracles and synthetic data, shared with the CLI acceptance suite.
//!
//! Nothing here calls into the cubical or persistence modules: the oracles
//! recompute what they check from the raw grid values.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use topodepth::grid::manifest::{LayerRecord, ManifestDocument, TensorRef};
use topodepth::grid::{write_tensor, Dtype};
use topodepth::ScalarGrid;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random grid with shape in `{3..5}×{3..5}×{1..5}` and integer values in 0..=4.
pub fn random_small_grid(rng: &mut ChaCha8Rng) -> ScalarGrid {
    let dims = vec![rng.gen_range(3..=5), rng.gen_range(3..=5), rng.gen_range(1..=5)];
    let n = dims.iter().product();
    let values = (0..n).map(|_| f64::from(rng.gen_range(0..=4u8))).collect();
    ScalarGrid::new(dims, values).unwrap()
}

/// Connected components of `{v : value(v) ≤ eta}` under 4/6-adjacency.
pub fn flood_fill_components(grid: &ScalarGrid, eta: f64) -> usize {
    let [a, b, c] = grid.dims3();
    let idx = |i: usize, j: usize, k: usize| (i * b + j) * c + k;
    let values = grid.values();
    let mut seen = vec![false; values.len()];
    let mut components = 0;
    for start in 0..values.len() {
        if seen[start] || values[start] > eta {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (i, j, k) = (p / (b * c), (p / c) % b, p % c);
            let mut neighbours = Vec::with_capacity(6);
            if i > 0 { neighbours.push(idx(i - 1, j, k)); }
            if i + 1 < a { neighbours.push(idx(i + 1, j, k)); }
            if j > 0 { neighbours.push(idx(i, j - 1, k)); }
            if j + 1 < b { neighbours.push(idx(i, j + 1, k)); }
            if k > 0 { neighbours.push(idx(i, j, k - 1)); }
            if k + 1 < c { neighbours.push(idx(i, j, k + 1)); }
            for q in neighbours {
                if !seen[q] && values[q] <= eta {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    components
}

/// Σ (−1)^dim over all cubes whose corner maximum is ≤ eta.
pub fn euler_characteristic(grid: &ScalarGrid, eta: f64) -> i64 {
    let [a, b, c] = grid.dims3();
    let value = |i: usize, j: usize, k: usize| grid.values()[(i * b + j) * c + k];
    let mut chi = 0i64;
    for i in 0..a {
        for j in 0..b {
            for k in 0..c {
                for axes in 0u8..8 {
                    let span = [axes & 1 != 0, axes & 2 != 0, axes & 4 != 0];
                    if (span[0] && i + 1 >= a) || (span[1] && j + 1 >= b) || (span[2] && k + 1 >= c) {
                        continue;
                    }
                    let mut top = f64::NEG_INFINITY;
                    for di in 0..=usize::from(span[0]) {
                        for dj in 0..=usize::from(span[1]) {
                            for dk in 0..=usize::from(span[2]) {
                                top = top.max(value(i + di, j + dj, k + dk));
                            }
                        }
                    }
                    if top <= eta {
                        chi += if axes.count_ones() % 2 == 0 { 1 } else { -1 };
                    }
                }
            }
        }
    }
    chi
}

/// A synthetic 2D shape on the unit square.
#[derive(Debug, Clone, Copy)]
pub enum Shape {
    /// Annulus: low values on the band, high elsewhere.
    Ring { cx: f64, cy: f64, radius: f64, width: f64 },
    /// Filled disk.
    Blob { cx: f64, cy: f64, radius: f64 },
}

impl Shape {
    pub fn random(rng: &mut ChaCha8Rng, ring: bool) -> Self {
        let cx = rng.gen_range(0.4..0.6);
        let cy = rng.gen_range(0.4..0.6);
        if ring {
            Shape::Ring {
                cx,
                cy,
                radius: rng.gen_range(0.22..0.32),
                width: rng.gen_range(0.07..0.1),
            }
        } else {
            Shape::Blob {
                cx,
                cy,
                radius: rng.gen_range(0.18..0.3),
            }
        }
    }

    /// Field value at a point of the unit square: 0 on the shape, rising to 1
    /// away from it.
    pub fn field(&self, x: f64, y: f64) -> f64 {
        let d = match *self {
            Shape::Ring { cx, cy, radius, width } => {
                (((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - radius).abs() - width / 2.0
            }
            Shape::Blob { cx, cy, radius } => ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - radius,
        };
        (d.max(0.0) * 8.0).min(1.0)
    }

    /// Samples the shape on an `n × n` pixel grid and adds uniform noise of
    /// amplitude `noise` drawn from `rng`.
    pub fn rasterize(&self, n: usize, noise: f64, rng: &mut ChaCha8Rng) -> ScalarGrid {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let (x, y) = ((j as f64 + 0.5) / n as f64, (i as f64 + 0.5) / n as f64);
                values.push(self.field(x, y) + noise * rng.gen_range(-1.0..1.0));
            }
        }
        ScalarGrid::new(vec![n, n], values).unwrap()
    }
}

/// Box blur with the given radius (clamped at the border).
pub fn box_blur(grid: &ScalarGrid, radius: usize) -> ScalarGrid {
    let [h, w, _] = grid.dims3();
    let v = grid.values();
    let mut out = Vec::with_capacity(v.len());
    for i in 0..h {
        for j in 0..w {
            let (i0, i1) = (i.saturating_sub(radius), (i + radius).min(h - 1));
            let (j0, j1) = (j.saturating_sub(radius), (j + radius).min(w - 1));
            let mut s = 0.0;
            for a in i0..=i1 {
                for b in j0..=j1 {
                    s += v[a * w + b];
                }
            }
            out.push(s / ((i1 - i0 + 1) * (j1 - j0 + 1)) as f64);
        }
    }
    ScalarGrid::new(vec![h, w], out).unwrap()
}

/// Writes one tensor per layer (a batch of grids with identical dims) plus a
/// manifest; returns the manifest path.
pub fn write_manifest(
    dir: &Path,
    model_id: &str,
    accuracy: Option<f64>,
    layers: &[(i64, &str, Vec<ScalarGrid>)],
) -> std::path::PathBuf {
    let mut records = Vec::new();
    for (index, name, grids) in layers {
        let dims = grids[0].dims().to_vec();
        let mut shape = vec![grids.len()];
        shape.extend(&dims);
        if dims.len() == 2 {
            shape.push(1);
        }
        let values: Vec<f64> = grids.iter().flat_map(|g| g.values().iter().copied()).collect();
        let file = format!("{model_id}_{index}.npy");
        write_tensor(dir.join(&file), &shape, &values, Dtype::F64).unwrap();
        records.push(LayerRecord {
            index: *index,
            name: name.to_string(),
            tensor: TensorRef::One(file),
            shape,
        });
    }
    let doc = ManifestDocument {
        model_id: model_id.into(),
        dataset_id: "synthetic".into(),
        finetuned_accuracy: accuracy,
        layers: records,
    };
    let path = dir.join(format!("{model_id}.json"));
    std::fs::write(&path, doc.to_json()).unwrap();
    path
}

/// A 1×`width` strip holding `k` isolated zeros in a background of 9s, so
/// ω = k at any η in [0, 9).
pub fn islands(k: usize, width: usize) -> ScalarGrid {
    assert!(2 * k <= width + 1);
    let values = (0..width)
        .map(|i| if i % 2 == 0 && i / 2 < k { 0.0 } else { 9.0 })
        .collect();
    ScalarGrid::new(vec![1, width], values).unwrap()
}
