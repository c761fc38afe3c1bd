//! Topology of activation grids across network depth.
//!
//! The pipeline reads per-layer activation tensors ([`grid`]), builds the
//! cubical sublevel filtration of each image ([`cubical`]), computes its
//! persistence diagram ([`persistence`]), summarizes each layer by the mean
//! Betti-number sum Ω at a threshold η ([`metrics`]), and ranks models by the
//! slope of their Ω-vs-depth curve ([`ttp`]).

pub mod cubical;
pub mod format;
pub mod grid;
pub mod metrics;
pub mod persistence;
pub mod ttp;

pub use cubical::{Cube, FilteredComplex};
pub use grid::{ChannelPolicy, GridOptions, LayerManifest, PoolMode, ScalarGrid};
pub use metrics::{BettiCurve, ComplexityRecord, Engine, EtaPolicy, OmegaTrajectory};
pub use persistence::{PersistenceDiagram, PersistencePair};
pub use ttp::{FittedPolynomial, RankingReport, TtpResult};
