//! Directed information graphs for traffic sensor networks.
//!
//! The pipeline takes per-sensor flow counts, estimates a memory depth from
//! cross-covariance peaks, quantizes the flows, and estimates the causally
//! conditioned directed information between every ordered pair of sensors
//! given all remaining sensors. Normalizing by the causally conditioned
//! entropy and thresholding yields the directed information graph.
//!
//! Two estimators are available: a plug-in estimator over counted blocks
//! ([`empirical`]) and a context-tree-weighting estimator ([`ctw`]). Two
//! synthetic traffic generators ([`sim_poisson`], [`sim_ctm`]) exercise the
//! whole pipeline.

pub mod bounds;
pub mod ctw;
pub mod empirical;
pub mod error;
pub mod graph;
pub mod lag;
pub mod rng;
pub mod series;
pub mod sim_ctm;
pub mod sim_poisson;

pub use error::{Error, Result};
pub use graph::{estimate_dig, CausalGraphResult, DigConfig, Estimator};
pub use series::{FlowSeries, QuantizedSeries, QuantizerSpec, QuantizerStrategy};
