//! Correlation-matrix principal component analysis.
//!
//! Eigenvectors are only defined up to sign, and tied eigenvalues only up to
//! a basis rotation. To keep output reproducible:
//!
//! - each loading column is flipped so its largest-magnitude entry is
//!   positive (ties go to the lowest variable index);
//! - eigenvalues are sorted descending, and runs of tied eigenvalues are
//!   ordered by the variable index of that largest-magnitude entry. Results
//!   inside a tied subspace still depend on the solver's basis.

use thiserror::Error;

use crate::linalg::{symmetric_eigen, EigenError, Matrix};
use crate::stats;

/// Relative tolerance used to decide that two magnitudes are tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Eigenvalues within this (scaled) distance are treated as tied.
const EIGEN_TIE_TOLERANCE: f64 = 1e-10;

/// Correlation matrices may be slightly indefinite from rounding.
const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("need at least 3 units for a correlation matrix, got {0}")]
    TooFewUnits(usize),
    #[error("no variables to analyse")]
    NoVariables,
    #[error("column `{0}` is constant; drop it before running PCA")]
    ConstantColumn(String),
    #[error("column `{0}` has non-finite values")]
    NonFinite(String),
    #[error("correlation matrix is not positive semidefinite (smallest eigenvalue {0})")]
    NotPositiveSemidefinite(f64),
    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("eigen solver: {0}")]
    Eigen(#[from] EigenError),
}

/// Column-standardized data: zero mean, unit sample variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    pub data: Matrix,
}

pub fn standardize(data: &Matrix, names: &[String]) -> Result<Standardized, PcaError> {
    if names.len() != data.cols() {
        return Err(PcaError::Shape(format!(
            "{} names for {} columns",
            names.len(),
            data.cols()
        )));
    }
    if data.cols() == 0 {
        return Err(PcaError::NoVariables);
    }
    if data.rows() < 3 {
        return Err(PcaError::TooFewUnits(data.rows()));
    }
    let mut out = Matrix::zeros(data.rows(), data.cols());
    let mut means = Vec::with_capacity(data.cols());
    let mut sds = Vec::with_capacity(data.cols());
    for (j, name) in names.iter().enumerate() {
        let col = data.column(j);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(PcaError::NonFinite(name.clone()));
        }
        if stats::is_constant(&col) {
            return Err(PcaError::ConstantColumn(name.clone()));
        }
        let m = stats::mean(&col);
        let sd = stats::std_dev(&col);
        if !(sd > 0.0) {
            return Err(PcaError::ConstantColumn(name.clone()));
        }
        for (i, v) in col.iter().enumerate() {
            out[(i, j)] = (v - m) / sd;
        }
        means.push(m);
        sds.push(sd);
    }
    Ok(Standardized {
        names: names.to_vec(),
        means,
        std_devs: sds,
        data: out,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub variable_names: Vec<String>,
    pub values: Matrix,
}

impl CorrelationMatrix {
    /// Validates symmetry, unit diagonal and the [-1, 1] range.
    pub fn new(variable_names: Vec<String>, values: Matrix) -> Result<Self, PcaError> {
        let k = variable_names.len();
        if values.rows() != k || values.cols() != k {
            return Err(PcaError::Shape(format!(
                "{k} names for a {}x{} matrix",
                values.rows(),
                values.cols()
            )));
        }
        if !values.is_symmetric(1e-12) {
            return Err(PcaError::InvalidCorrelation("not symmetric".into()));
        }
        for i in 0..k {
            if (values[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(PcaError::InvalidCorrelation(format!(
                    "diagonal entry {i} is {}",
                    values[(i, i)]
                )));
            }
        }
        if values.as_slice().iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(PcaError::InvalidCorrelation("entry outside [-1, 1]".into()));
        }
        Ok(Self {
            variable_names,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.variable_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variable_names.is_empty()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.variable_names.iter().position(|n| n == a)?;
        let j = self.variable_names.iter().position(|n| n == b)?;
        Some(self.values[(i, j)])
    }
}

/// Pearson correlation matrix of already standardized data.
pub fn correlation_of_standardized(z: &Standardized) -> CorrelationMatrix {
    let (n, k) = (z.data.rows(), z.data.cols());
    let cols: Vec<Vec<f64>> = (0..k).map(|j| z.data.column(j)).collect();
    let mut c = Matrix::identity(k);
    for i in 0..k {
        for j in 0..i {
            let r = stats::sum(cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b)) / (n as f64 - 1.0);
            let r = r.clamp(-1.0, 1.0);
            c[(i, j)] = r;
            c[(j, i)] = r;
        }
    }
    CorrelationMatrix {
        variable_names: z.names.clone(),
        values: c,
    }
}

/// Pearson correlation matrix of a units × variables table.
pub fn correlation(data: &Matrix, names: &[String]) -> Result<CorrelationMatrix, PcaError> {
    Ok(correlation_of_standardized(&standardize(data, names)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub variable_names: Vec<String>,
    /// Descending, non-negative.
    pub eigenvalues: Vec<f64>,
    /// Variables × components; column j is the unit-norm eigenvector of
    /// eigenvalue j.
    pub loadings: Matrix,
    pub explained_fraction: Vec<f64>,
    /// Units × components.
    pub scores: Matrix,
}

impl PcaResult {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn loading_column(&self, component: usize) -> Vec<f64> {
        self.loadings.column(component)
    }

    pub fn score_column(&self, component: usize) -> Vec<f64> {
        self.scores.column(component)
    }

    /// Index of the variable with the largest |loading| on `component`;
    /// magnitudes within [`TIE_TOLERANCE`] of the maximum count as tied and
    /// the lowest index wins.
    pub fn top_variable(&self, component: usize) -> usize {
        abs_argmax(&self.loading_column(component))
    }

    /// See [`select_components`].
    pub fn select_components(&self, threshold: f64) -> usize {
        select_components(&self.explained_fraction, threshold)
    }
}

/// First index whose magnitude is within [`TIE_TOLERANCE`] (relative) of the
/// largest magnitude.
pub fn abs_argmax(values: &[f64]) -> usize {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    values
        .iter()
        .position(|v| v.abs() >= max * (1.0 - TIE_TOLERANCE))
        .unwrap_or(0)
}

/// Eigen-decomposes `corr` and projects `standardized` onto the components.
pub fn run_pca(corr: &CorrelationMatrix, standardized: &Matrix) -> Result<PcaResult, PcaError> {
    let k = corr.len();
    if k == 0 {
        return Err(PcaError::NoVariables);
    }
    if standardized.cols() != k {
        return Err(PcaError::Shape(format!(
            "standardized data has {} columns, correlation matrix has {k}",
            standardized.cols()
        )));
    }
    let (values, vectors) = symmetric_eigen(&corr.values)?;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE {
        return Err(PcaError::NotPositiveSemidefinite(min));
    }

    // Canonical sign and pivot index per eigenvector.
    let mut pairs: Vec<(f64, usize, Vec<f64>)> = (0..k)
        .map(|j| {
            let mut v = vectors.column(j);
            let pivot = abs_argmax(&v);
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            (values[j].max(0.0), pivot, v)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let tie = EIGEN_TIE_TOLERANCE * pairs[0].0.max(1.0);
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && pairs[end - 1].0 - pairs[end].0 <= tie {
            end += 1;
        }
        pairs[start..end].sort_by(|a, b| a.1.cmp(&b.1).then(b.0.total_cmp(&a.0)));
        start = end;
    }

    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let loadings = Matrix::from_columns(&pairs.iter().map(|p| p.2.clone()).collect::<Vec<_>>());
    let total = stats::sum(eigenvalues.iter().copied());
    let explained_fraction = eigenvalues.iter().map(|l| l / total).collect();
    let scores = standardized.matmul(&loadings);
    Ok(PcaResult {
        variable_names: corr.variable_names.clone(),
        eigenvalues,
        loadings,
        explained_fraction,
        scores,
    })
}

/// Standardize, correlate and decompose in one step.
pub fn fit(data: &Matrix, names: &[String]) -> Result<PcaResult, PcaError> {
    let z = standardize(data, names)?;
    let corr = correlation_of_standardized(&z);
    run_pca(&corr, &z.data)
}

/// Smallest number of leading components whose cumulative explained
/// fraction reaches `threshold` (inclusive, with a 1e-12 allowance for
/// rounding so that e.g. 3/4 meets 0.75).
pub fn select_components(explained_fraction: &[f64], threshold: f64) -> usize {
    assert!(
        threshold > 0.0 && threshold <= 1.0,
        "threshold must lie in (0, 1], got {threshold}"
    );
    let mut cumulative = 0.0;
    for (i, f) in explained_fraction.iter().enumerate() {
        cumulative += f;
        if cumulative >= threshold - 1e-12 {
            return i + 1;
        }
    }
    explained_fraction.len()
}
