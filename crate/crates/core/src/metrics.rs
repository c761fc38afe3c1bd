//! Betti curves and the per-layer topological complexity Ω.
//!
//! For one image, ω is the sum β₀ + β₁ + β₂ of its diagram at a threshold η.
//! For one layer, Ω is the mean of ω over the images. A trajectory is Ω
//! layer by layer at a single η, chosen once on the first layer.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::format::fmt_f64;
use crate::grid::{GridError, GridOptions, LayerManifest, ScalarGrid};
use crate::persistence::{
    diagram_with, BettiTriple, PersistenceConfig, PersistenceDiagram, PersistenceError,
};

/// Default number of candidate thresholds scanned by [`select_eta`].
pub const DEFAULT_ETA_CANDIDATES: usize = 256;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("threshold grid is empty or has fewer than two points")]
    EmptyGrid,
    #[error("threshold grid is not ascending")]
    NotAscending,
    #[error("no diagrams to choose a threshold from")]
    NoDiagrams,
    #[error("need at least 2 threshold candidates, got {0}")]
    TooFewCandidates(usize),
    #[error(
        "no threshold makes β0, β1 and β2 all non-zero for every first-layer image \
         (best candidate η = {best_eta} reaches min β = {best_min_betti})"
    )]
    NoValidThreshold { best_eta: f64, best_min_betti: usize },
    #[error("a layer needs at least one image")]
    NoImages,
    #[error("image {index}: {source}")]
    Image {
        index: usize,
        #[source]
        source: PersistenceError,
    },
    #[error("layer '{layer}': {source}")]
    Layer {
        layer: String,
        #[source]
        source: Box<MetricsError>,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("cannot start worker pool: {0}")]
    WorkerPool(String),
}

/// Betti numbers sampled on an ascending threshold grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BettiCurve {
    pub etas: Vec<f64>,
    pub values: Vec<BettiTriple>,
}

impl BettiCurve {
    /// CSV with header `eta,b0,b1,b2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eta,b0,b1,b2\n");
        for (eta, [b0, b1, b2]) in self.etas.iter().zip(&self.values) {
            writeln!(out, "{},{b0},{b1},{b2}", fmt_f64(*eta)).unwrap();
        }
        out
    }
}

/// `count` evenly spaced thresholds from `min` to `max` inclusive.
pub fn eta_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>, MetricsError> {
    if count < 2 {
        return Err(MetricsError::EmptyGrid);
    }
    if !(min.is_finite() && max.is_finite()) || max < min {
        return Err(MetricsError::NotAscending);
    }
    let last = (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                max
            } else {
                min + (max - min) * (i as f64 / last)
            }
        })
        .collect())
}

pub fn betti_curve(diagram: &PersistenceDiagram, etas: &[f64]) -> Result<BettiCurve, MetricsError> {
    if etas.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    if etas.windows(2).any(|w| w[1] < w[0]) {
        return Err(MetricsError::NotAscending);
    }
    Ok(BettiCurve {
        etas: etas.to_vec(),
        values: etas.iter().map(|&eta| diagram.betti_at(eta)).collect(),
    })
}

/// Smallest η on an evenly spaced grid over [min birth, max finite death]
/// at which every diagram has β₀, β₁ and β₂ all at least 1.
pub fn select_eta(diagrams: &[PersistenceDiagram], candidates: usize) -> Result<f64, MetricsError> {
    if diagrams.is_empty() {
        return Err(MetricsError::NoDiagrams);
    }
    if candidates < 2 {
        return Err(MetricsError::TooFewCandidates(candidates));
    }
    let lo = diagrams
        .iter()
        .filter_map(PersistenceDiagram::min_birth)
        .min_by(f64::total_cmp);
    let Some(lo) = lo else {
        // every diagram is empty
        return Err(MetricsError::NoValidThreshold {
            best_eta: 0.0,
            best_min_betti: 0,
        });
    };
    let hi = diagrams
        .iter()
        .filter_map(PersistenceDiagram::max_finite_death)
        .max_by(f64::total_cmp)
        .unwrap_or(lo)
        .max(lo);

    let mut best = (lo, 0usize);
    for eta in eta_grid(lo, hi, candidates)? {
        let worst = diagrams
            .iter()
            .map(|d| d.betti_at(eta).into_iter().min().unwrap_or(0))
            .min()
            .unwrap_or(0);
        if worst >= 1 {
            return Ok(eta);
        }
        if worst > best.1 {
            best = (eta, worst);
        }
    }
    Err(MetricsError::NoValidThreshold {
        best_eta: best.0,
        best_min_betti: best.1,
    })
}

/// ω = β₀ + β₁ + β₂ at `eta`.
pub fn omega_for_image(diagram: &PersistenceDiagram, eta: f64) -> u32 {
    diagram.betti_at(eta).iter().sum::<usize>() as u32
}

/// Ω and the per-image ω values behind it for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityRecord {
    pub layer_index: i64,
    pub layer_name: String,
    pub eta: f64,
    pub omega_values: Vec<u32>,
    pub omega_mean: f64,
}

impl ComplexityRecord {
    pub fn new(layer_index: i64, layer_name: impl Into<String>, eta: f64, omega_values: Vec<u32>) -> Self {
        let total: u64 = omega_values.iter().map(|&w| u64::from(w)).sum();
        let omega_mean = if omega_values.is_empty() {
            0.0
        } else {
            total as f64 / omega_values.len() as f64
        };
        Self {
            layer_index,
            layer_name: layer_name.into(),
            eta,
            omega_values,
            omega_mean,
        }
    }

    pub fn from_diagrams(
        layer_index: i64,
        layer_name: impl Into<String>,
        eta: f64,
        diagrams: &[PersistenceDiagram],
    ) -> Self {
        let omegas = diagrams.iter().map(|d| omega_for_image(d, eta)).collect();
        Self::new(layer_index, layer_name, eta, omegas)
    }

    pub fn n_images(&self) -> usize {
        self.omega_values.len()
    }

    /// Population standard deviation of ω.
    pub fn omega_std(&self) -> f64 {
        let n = self.omega_values.len();
        if n == 0 {
            return 0.0;
        }
        let mean = self.omega_mean;
        let var = self
            .omega_values
            .iter()
            .map(|&w| (f64::from(w) - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        var.sqrt()
    }

    pub fn omega_min(&self) -> u32 {
        self.omega_values.iter().copied().min().unwrap_or(0)
    }

    pub fn omega_max(&self) -> u32 {
        self.omega_values.iter().copied().max().unwrap_or(0)
    }
}

/// Ω layer by layer for one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaTrajectory {
    pub model_id: String,
    pub dataset_id: String,
    pub records: Vec<ComplexityRecord>,
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl OmegaTrajectory {
    pub fn omegas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.omega_mean).collect()
    }

    pub fn eta(&self) -> Option<f64> {
        self.records.first().map(|r| r.eta)
    }

    /// CSV with header
    /// `layer_index,layer_name,eta,n_images,omega_mean,omega_std,omega_min,omega_max`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("layer_index,layer_name,eta,n_images,omega_mean,omega_std,omega_min,omega_max\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.layer_index,
                csv_field(&r.layer_name),
                fmt_f64(r.eta),
                r.n_images(),
                fmt_f64(r.omega_mean),
                fmt_f64(r.omega_std()),
                r.omega_min(),
                r.omega_max()
            )
            .unwrap();
        }
        out
    }
}

/// How η is chosen for a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaPolicy {
    Fixed(f64),
    /// Run [`select_eta`] on the first layer's diagrams.
    AutoLayer1 { candidates: usize },
}

impl Default for EtaPolicy {
    fn default() -> Self {
        EtaPolicy::AutoLayer1 {
            candidates: DEFAULT_ETA_CANDIDATES,
        }
    }
}

impl fmt::Display for EtaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaPolicy::Fixed(eta) => write!(f, "{}", fmt_f64(*eta)),
            EtaPolicy::AutoLayer1 { .. } => write!(f, "auto"),
        }
    }
}

impl FromStr for EtaPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Self::default());
        }
        match s.parse::<f64>() {
            Ok(eta) if eta.is_finite() => Ok(Self::Fixed(eta)),
            _ => Err(format!("expected 'auto' or a finite number, got '{s}'")),
        }
    }
}

/// Computes diagrams on a bounded worker pool. Output order follows input
/// order, so results do not depend on the number of workers.
pub struct Engine {
    pool: rayon::ThreadPool,
    pub persistence: PersistenceConfig,
}

impl Engine {
    pub fn new(workers: usize) -> Result<Self, MetricsError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| MetricsError::WorkerPool(e.to_string()))?;
        Ok(Self {
            pool,
            persistence: PersistenceConfig::default(),
        })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn diagrams(&self, grids: &[ScalarGrid]) -> Result<Vec<PersistenceDiagram>, MetricsError> {
        let config = self.persistence;
        self.pool.install(|| {
            grids
                .par_iter()
                .enumerate()
                .map(|(index, g)| {
                    diagram_with(g, &config).map_err(|source| MetricsError::Image { index, source })
                })
                .collect()
        })
    }

    pub fn omega_for_layer(
        &self,
        layer_index: i64,
        layer_name: &str,
        grids: &[ScalarGrid],
        eta: f64,
    ) -> Result<ComplexityRecord, MetricsError> {
        if grids.is_empty() {
            return Err(MetricsError::NoImages);
        }
        let diagrams = self.diagrams(grids)?;
        Ok(ComplexityRecord::from_diagrams(layer_index, layer_name, eta, &diagrams))
    }

    /// Ω for every layer of `manifest`, all at one η.
    pub fn trajectory(
        &self,
        manifest: &LayerManifest,
        eta_policy: EtaPolicy,
        options: &GridOptions,
    ) -> Result<OmegaTrajectory, MetricsError> {
        let in_layer = |name: &str| {
            let name = name.to_string();
            move |e: MetricsError| MetricsError::Layer {
                layer: name,
                source: Box::new(e),
            }
        };

        let mut records = Vec::with_capacity(manifest.layers.len());
        let mut eta = match eta_policy {
            EtaPolicy::Fixed(eta) => Some(eta),
            EtaPolicy::AutoLayer1 { .. } => None,
        };
        for layer in &manifest.layers {
            let grids = options
                .load_grids(&layer.tensors)
                .map_err(MetricsError::from)
                .map_err(in_layer(&layer.name))?;
            if grids.is_empty() {
                return Err(in_layer(&layer.name)(MetricsError::NoImages));
            }
            let diagrams = self.diagrams(&grids).map_err(in_layer(&layer.name))?;
            let layer_eta = match (eta, eta_policy) {
                (Some(eta), _) => eta,
                (None, EtaPolicy::AutoLayer1 { candidates }) => {
                    let chosen = select_eta(&diagrams, candidates).map_err(in_layer(&layer.name))?;
                    eta = Some(chosen);
                    chosen
                }
                (None, EtaPolicy::Fixed(v)) => v,
            };
            records.push(ComplexityRecord::from_diagrams(
                layer.index,
                &layer.name,
                layer_eta,
                &diagrams,
            ));
        }
        Ok(OmegaTrajectory {
            model_id: manifest.model_id.clone(),
            dataset_id: manifest.dataset_id.clone(),
            records,
        })
    }
}
