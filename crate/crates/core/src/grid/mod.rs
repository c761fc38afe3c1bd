//! Activation tensors in, scalar grids out.

pub mod manifest;
pub mod npy;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

pub use manifest::{load_manifest, LayerEntry, LayerManifest};
pub use npy::{read_header, read_tensor, write_tensor, Dtype, Tensor, TensorHeader};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed npy header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dtype: {0}")]
    UnsupportedDtype(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("tensor of shape {0:?} has unsupported rank (expected 2, 3 or 4 axes)")]
    UnsupportedRank(Vec<usize>),
    #[error("tensor of shape {0:?} has an empty axis")]
    EmptyAxis(Vec<usize>),
    #[error("channel {index} out of range for {channels} channels")]
    BadChannelIndex { index: usize, channels: usize },
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("manifest schema violation: {0}")]
    SchemaViolation(String),
    #[error("layer '{layer}' references missing tensor file {path}")]
    MissingTensorFile { layer: String, path: PathBuf },
    #[error("layer indices must be strictly increasing ({previous} then {next})")]
    NonMonotoneLayerIndex { previous: i64, next: i64 },
    #[error("layer '{layer}': tensor {path} has shape {found:?}, manifest declares {declared:?}")]
    ShapeMismatch {
        layer: String,
        path: PathBuf,
        declared: Vec<usize>,
        found: Vec<usize>,
    },
}

/// A dense 2D or 3D field of finite filtration values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self, GridError> {
        if !(2..=3).contains(&dims.len()) {
            return Err(GridError::UnsupportedRank(dims));
        }
        if dims.contains(&0) {
            return Err(GridError::EmptyAxis(dims));
        }
        let expected: usize = dims.iter().product();
        if expected != values.len() {
            return Err(GridError::SchemaViolation(format!(
                "grid {dims:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        let mut values = values;
        for (index, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(GridError::NonFinite { index, value: *v });
            }
            // fold -0.0 into +0.0 so value ordering agrees with total_cmp
            *v += 0.0;
        }
        Ok(Self { dims, values })
    }

    /// Convenience constructor for 2D grids given as rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, GridError> {
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(GridError::SchemaViolation("ragged rows".into()));
        }
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(vec![rows.len(), width], values)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Dims padded to three axes with trailing 1s.
    pub fn dims3(&self) -> [usize; 3] {
        [
            self.dims[0],
            self.dims[1],
            self.dims.get(2).copied().unwrap_or(1),
        ]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        Self::new(self.dims.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Rescales values affinely onto `[0, 1]`. A constant grid maps to zeros.
    pub fn min_max_normalized(&self) -> Self {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        let values = if span > 0.0 {
            self.values.iter().map(|&v| (v - lo) / span).collect()
        } else {
            vec![0.0; self.values.len()]
        };
        Self {
            dims: self.dims.clone(),
            values,
        }
    }
}

/// How the channel axis of an `H×W×C` tensor becomes a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelPolicy {
    /// Keep channels as the third grid axis.
    #[default]
    Volume,
    /// Average over channels, giving a 2D grid.
    Mean,
    /// Take a single channel.
    Select(usize),
}

impl fmt::Display for ChannelPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelPolicy::Volume => write!(f, "volume"),
            ChannelPolicy::Mean => write!(f, "mean"),
            ChannelPolicy::Select(k) => write!(f, "select:{k}"),
        }
    }
}

impl FromStr for ChannelPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "volume" => Ok(Self::Volume),
            "mean" => Ok(Self::Mean),
            other => other
                .strip_prefix("select:")
                .and_then(|k| k.parse().ok())
                .map(Self::Select)
                .ok_or_else(|| format!("expected volume, mean or select:<k>, got '{other}'")),
        }
    }
}

/// Converts one image tensor (batch axis already stripped) into a grid.
pub fn to_grid(tensor: &Tensor, policy: ChannelPolicy) -> Result<ScalarGrid, GridError> {
    let shape = tensor.shape();
    match shape.len() {
        2 => ScalarGrid::new(shape.to_vec(), tensor.values.clone()),
        3 => {
            let (h, w, c) = (shape[0], shape[1], shape[2]);
            match policy {
                ChannelPolicy::Volume => ScalarGrid::new(shape.to_vec(), tensor.values.clone()),
                ChannelPolicy::Mean => {
                    if c == 0 {
                        return Err(GridError::EmptyAxis(shape.to_vec()));
                    }
                    let values = tensor
                        .values
                        .chunks_exact(c)
                        .map(|px| px.iter().sum::<f64>() / c as f64)
                        .collect();
                    ScalarGrid::new(vec![h, w], values)
                }
                ChannelPolicy::Select(k) => {
                    if k >= c {
                        return Err(GridError::BadChannelIndex {
                            index: k,
                            channels: c,
                        });
                    }
                    let values = tensor.values.chunks_exact(c).map(|px| px[k]).collect();
                    ScalarGrid::new(vec![h, w], values)
                }
            }
        }
        _ => Err(GridError::UnsupportedRank(shape.to_vec())),
    }
}

/// Spatial reduction applied by [`downsample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolMode {
    /// Keep every `factor`-th sample.
    #[default]
    Stride,
    /// Maximum over each `factor × factor` block (clipped at the border).
    MaxPool,
}

impl FromStr for PoolMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stride" => Ok(Self::Stride),
            "max" | "max_pool" => Ok(Self::MaxPool),
            other => Err(format!("expected stride or max, got '{other}'")),
        }
    }
}

/// Reduces the two spatial axes by `factor` (ceiling division). A third
/// (channel) axis is left untouched.
pub fn downsample(grid: &ScalarGrid, factor: usize, mode: PoolMode) -> ScalarGrid {
    if factor <= 1 {
        return grid.clone();
    }
    let [h, w, c] = grid.dims3();
    let (oh, ow) = (h.div_ceil(factor), w.div_ceil(factor));
    let at = |i: usize, j: usize, k: usize| grid.values[(i * w + j) * c + k];
    let mut values = Vec::with_capacity(oh * ow * c);
    for oi in 0..oh {
        for oj in 0..ow {
            for k in 0..c {
                let (i0, j0) = (oi * factor, oj * factor);
                let v = match mode {
                    PoolMode::Stride => at(i0, j0, k),
                    PoolMode::MaxPool => {
                        let mut best = f64::NEG_INFINITY;
                        for i in i0..(i0 + factor).min(h) {
                            for j in j0..(j0 + factor).min(w) {
                                best = best.max(at(i, j, k));
                            }
                        }
                        best
                    }
                };
                values.push(v);
            }
        }
    }
    let mut dims = vec![oh, ow];
    if grid.dims.len() == 3 {
        dims.push(c);
    }
    ScalarGrid { dims, values }
}

/// Grid preparation applied to every image before homology.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GridOptions {
    pub channels: ChannelPolicy,
    pub downsample: Option<(usize, PoolMode)>,
    pub normalize: bool,
}

impl GridOptions {
    pub fn prepare(&self, tensor: &Tensor) -> Result<ScalarGrid, GridError> {
        let mut grid = to_grid(tensor, self.channels)?;
        if let Some((factor, mode)) = self.downsample {
            grid = downsample(&grid, factor, mode);
        }
        if self.normalize {
            grid = grid.min_max_normalized();
        }
        Ok(grid)
    }

    /// Reads every image grid referenced by `paths`, splitting batch tensors.
    pub fn load_grids<P: AsRef<std::path::Path>>(
        &self,
        paths: &[P],
    ) -> Result<Vec<ScalarGrid>, GridError> {
        let mut grids = Vec::new();
        for path in paths {
            for image in read_tensor(path)?.split_batch()? {
                grids.push(self.prepare(&image)?);
            }
        }
        Ok(grids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(shape: &[usize], values: Vec<f64>) -> Tensor {
        Tensor {
            header: TensorHeader {
                shape: shape.to_vec(),
                dtype: Dtype::F64,
            },
            values,
        }
    }

    #[test]
    fn two_axis_tensor_ignores_policy() {
        let t = tensor(&[4, 4], (0..16).map(f64::from).collect());
        for policy in [ChannelPolicy::Volume, ChannelPolicy::Mean, ChannelPolicy::Select(3)] {
            let g = to_grid(&t, policy).unwrap();
            assert_eq!(g.dims(), &[4, 4]);
            assert_eq!(g.values(), t.values.as_slice());
        }
    }

    #[test]
    fn volume_keeps_channel_axis() {
        let t = tensor(&[4, 4, 3], vec![0.5; 48]);
        assert_eq!(to_grid(&t, ChannelPolicy::Volume).unwrap().dims(), &[4, 4, 3]);
    }

    #[test]
    fn mean_over_channels() {
        let t = tensor(&[2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        // brute-force oracle: average each position's channel pair
        let expected: Vec<f64> = (0..4)
            .map(|p| (t.values[2 * p] + t.values[2 * p + 1]) / 2.0)
            .collect();
        let g = to_grid(&t, ChannelPolicy::Mean).unwrap();
        assert_eq!(g.dims(), &[2, 2]);
        assert_eq!(g.values(), expected.as_slice());
        assert_eq!(g.values(), &[1.5, 3.5, 5.5, 7.5]);
    }

    #[test]
    fn select_channel_bounds() {
        let t = tensor(&[1, 2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(
            to_grid(&t, ChannelPolicy::Select(2)).unwrap().values(),
            &[2.0, 5.0]
        );
        assert!(matches!(
            to_grid(&t, ChannelPolicy::Select(3)),
            Err(GridError::BadChannelIndex {
                index: 3,
                channels: 3
            })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let err = ScalarGrid::new(vec![1, 2], vec![0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, GridError::NonFinite { index: 1, .. }));
        assert!(ScalarGrid::new(vec![2], vec![0.0, 1.0]).is_err());
        assert!(ScalarGrid::new(vec![0, 2], vec![]).is_err());
    }

    #[test]
    fn negative_zero_is_canonicalized() {
        let g = ScalarGrid::new(vec![1, 2], vec![-0.0, 0.0]).unwrap();
        assert!(g.values().iter().all(|v| v.is_sign_positive()));
    }

    #[test]
    fn stride_picks_even_positions() {
        let g = ScalarGrid::new(vec![4, 4], (0..16).map(f64::from).collect()).unwrap();
        let d = downsample(&g, 2, PoolMode::Stride);
        assert_eq!(d.dims(), &[2, 2]);
        // positions (0,0),(0,2),(2,0),(2,2)
        assert_eq!(d.values(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn max_pool_matches_block_maxima() {
        let vals = [3.0, 9.0, 1.0, 4.0, 7.0, 2.0, 8.0, 6.0, 5.0, 0.0, 15.0, 11.0, 13.0, 10.0, 12.0, 14.0];
        let g = ScalarGrid::new(vec![4, 4], vals.to_vec()).unwrap();
        let d = downsample(&g, 2, PoolMode::MaxPool);
        let mut oracle = vec![];
        for bi in 0..2 {
            for bj in 0..2 {
                let mut m = f64::MIN;
                for i in 0..2 {
                    for j in 0..2 {
                        m = m.max(vals[(2 * bi + i) * 4 + 2 * bj + j]);
                    }
                }
                oracle.push(m);
            }
        }
        assert_eq!(d.values(), oracle.as_slice());
    }

    #[test]
    fn downsample_leaves_channels_and_rounds_up() {
        let g = ScalarGrid::new(vec![5, 3, 2], (0..30).map(f64::from).collect()).unwrap();
        let d = downsample(&g, 2, PoolMode::MaxPool);
        assert_eq!(d.dims(), &[3, 2, 2]);
        // bottom-right block is clipped to the single row 4, column 2
        assert_eq!(d.values()[d.len() - 1], 29.0);
        let tiny = downsample(&g, 10, PoolMode::Stride);
        assert_eq!(tiny.dims(), &[1, 1, 2]);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("volume".parse::<ChannelPolicy>().unwrap(), ChannelPolicy::Volume);
        assert_eq!("select:4".parse::<ChannelPolicy>().unwrap(), ChannelPolicy::Select(4));
        assert!("select:x".parse::<ChannelPolicy>().is_err());
        assert_eq!("max".parse::<PoolMode>().unwrap(), PoolMode::MaxPool);
    }

    #[test]
    fn normalization() {
        let g = ScalarGrid::new(vec![1, 3], vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(g.min_max_normalized().values(), &[0.0, 0.5, 1.0]);
        let c = ScalarGrid::new(vec![1, 2], vec![3.0, 3.0]).unwrap();
        assert_eq!(c.min_max_normalized().values(), &[0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn downsample_by_one_is_identity(
            h in 1usize..6, w in 1usize..6, c in prop::option::of(1usize..4), seed in any::<u64>()
        ) {
            let mut dims = vec![h, w];
            if let Some(c) = c { dims.push(c); }
            let n: usize = dims.iter().product();
            let values = (0..n).map(|i| ((i as u64).wrapping_mul(seed) % 97) as f64).collect();
            let g = ScalarGrid::new(dims, values).unwrap();
            prop_assert_eq!(downsample(&g, 1, PoolMode::Stride), g.clone());
            prop_assert_eq!(downsample(&g, 1, PoolMode::MaxPool), g);
        }

        #[test]
        fn volume_is_a_relabeling(h in 1usize..5, w in 1usize..5, c in 1usize..5, seed in any::<u64>()) {
            let n = h * w * c;
            let values: Vec<f64> = (0..n).map(|i| ((i as u64 ^ seed) % 13) as f64).collect();
            let t = tensor(&[h, w, c], values.clone());
            let g = to_grid(&t, ChannelPolicy::Volume).unwrap();
            let mut a = values;
            let mut b = g.values().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }
}
