//! Spatial validation: contiguity weights, Moran's I with permutation
//! inference, simple OLS and geographically weighted regression.

mod moran;
mod regression;
mod weights;

use thiserror::Error;

pub use moran::{morans_i, morans_i_statistic, Alternative, MoranConfig, MoranResult, DEFAULT_PERMUTATIONS};
pub use regression::{
    adjusted_r2, aicc, compare_models, gwr_fit, jitter_duplicates, ols_simple, GwrConfig, Kernel, ModelKind,
    ModelRow, SpatialFit, DEPENDENCE_LEVEL, JITTER_SCALE,
};
pub use weights::{
    centroid, grid_polygons, parse_adjacency_list, queen_contiguity, Polygon, Ring, SpatialWeights, UnitGeometry,
    DEFAULT_QUANTUM,
};

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("unit `{0}` has empty geometry")]
    EmptyGeometry(String),
    #[error("unit `{0}` has non-finite coordinates")]
    InvalidGeometry(String),
    #[error("unit `{0}` lists itself as a neighbor")]
    SelfNeighbor(String),
    #[error("neighbor relation is not symmetric: `{0}` lists `{1}` but not the reverse")]
    Asymmetric(String, String),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("unit `{0}` appears more than once")]
    DuplicateUnit(String),
    #[error("unit ids do not match: missing {missing:?}, unexpected {unexpected:?}")]
    UnitMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least {needed} units, got {got}")]
    TooFewUnits { needed: usize, got: usize },
    #[error("values have zero variance")]
    ZeroVariance,
    #[error("weights contain no links")]
    NoLinks,
    #[error("non-finite input values")]
    NonFinite,
    #[error("predictor is constant")]
    ConstantPredictor,
    #[error("a seed is required when permutations > 0")]
    MissingSeed,
    #[error("local design at unit index {unit} is singular (all in-bandwidth predictor values equal)")]
    SingularLocalDesign { unit: usize },
    #[error("model too flexible: n - 2 - tr(S) <= 0 with n = {n}, tr(S) = {hat_trace}")]
    TooFlexible { n: usize, hat_trace: f64 },
    #[error("fit `{0}` was computed on a different outcome vector")]
    MixedOutcomes(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
