//! Composite socioeconomic index construction from weighted areal microdata.
//!
//! The crate is organised along the data flow:
//!
//! - [`catalog`]: dimension and variable schema, loaded from TOML.
//! - [`ingest`]: weighted aggregation of micro records into an [`AreaTable`].
//! - [`pca`]: correlation-matrix principal component analysis.
//! - [`index`]: the successive-PCA index pipeline, dimension decomposition and
//!   reliability.
//! - [`spatial`]: contiguity weights, Moran's I, OLS and geographically
//!   weighted regression used to validate an index against health outcomes.
//! - [`synth`]: seeded synthetic inputs for tests, demos and fixtures.

pub mod catalog;
pub mod index;
pub mod ingest;
pub mod linalg;
pub mod pca;
pub mod spatial;
pub mod stats;
pub mod synth;

pub use catalog::{Dimension, VariableCatalog, VariableDef, VariableKind};
pub use index::{IndexResult, PipelineConfig};
pub use ingest::{AreaTable, MicroRecord};
pub use linalg::Matrix;
pub use pca::{CorrelationMatrix, PcaResult};
pub use spatial::{SpatialFit, SpatialWeights};
