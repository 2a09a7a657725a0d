//! The successive-PCA index pipeline.
//!
//! 1. Shift every cell by a constant (10 by default). Correlations are
//!    unchanged; the shift only keeps values away from zero.
//! 2. Per dimension: PCA, keep the fewest leading components explaining at
//!    least 75% of the variance, and take the variable with the largest
//!    |loading| on each kept component.
//! 3. PCA on the union of those variables; keep the variables whose
//!    first-component |loading| is strictly above the mean |loading|.
//! 4. PCA on the survivors; the first component is the raw index, oriented
//!    to correlate non-negatively with an anchor variable (mean household
//!    income by default).
//! 5. Min-max scale the index to [-1, +1].
//!
//! Each active dimension (one with a survivor from step 3) is represented by
//! its survivor most correlated with the index.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::catalog::VariableCatalog;
use crate::ingest::{AreaTable, Column, IngestError};
use crate::linalg::Matrix;
use crate::pca::{self, PcaError};
use crate::stats;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("input table: {0}")]
    Table(#[from] IngestError),
    #[error("variable `{variable}` in dimension `{dimension}` is constant across units")]
    ConstantColumn { variable: String, dimension: String },
    #[error("every variable of dimension `{0}` is constant across units")]
    DimensionConstant(String),
    #[error("PCA failed at {stage}: {source}")]
    Pca {
        stage: String,
        #[source]
        source: PcaError,
    },
    #[error("raw index scores are constant; the index is undefined")]
    ConstantScores,
    #[error("need at least {needed} variables, got {got}")]
    TooFewVariables { needed: usize, got: usize },
    #[error("unit ids do not match: missing {missing:?}, unexpected {unexpected:?}")]
    UnitMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("reference column `{0}` is constant")]
    ConstantReference(String),
}

fn pca_at(stage: impl Into<String>) -> impl FnOnce(PcaError) -> IndexError {
    let stage = stage.into();
    move |source| IndexError::Pca { stage, source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub shift_constant: f64,
    pub variance_threshold: f64,
    /// `None` means the catalog's income weighted-mean variable.
    pub orientation_variable: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            shift_constant: 10.0,
            variance_threshold: 0.75,
            orientation_variable: None,
        }
    }
}

impl PipelineConfig {
    pub fn resolve_orientation<'a>(&'a self, catalog: &'a VariableCatalog) -> Result<&'a str, IndexError> {
        let name = match &self.orientation_variable {
            Some(v) => v.as_str(),
            None => catalog.default_orientation_variable().ok_or_else(|| {
                IndexError::Config("catalog has no income dimension; set orientation_variable".into())
            })?,
        };
        if catalog.variable(name).is_none() {
            return Err(IndexError::Config(format!(
                "orientation variable `{name}` is not in the catalog"
            )));
        }
        Ok(name)
    }

    pub fn validate(&self, catalog: &VariableCatalog) -> Result<(), IndexError> {
        if !(self.variance_threshold > 0.0 && self.variance_threshold <= 1.0) {
            return Err(IndexError::Config(format!(
                "variance_threshold must lie in (0, 1], got {}",
                self.variance_threshold
            )));
        }
        if !self.shift_constant.is_finite() {
            return Err(IndexError::Config("shift_constant must be finite".into()));
        }
        self.resolve_orientation(catalog).map(|_| ())
    }
}

/// Adds the shift constant to every cell.
pub fn preprocess(table: &AreaTable, config: &PipelineConfig) -> AreaTable {
    table.shifted(config.shift_constant)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionSelection {
    pub dimension: String,
    pub candidates: Vec<String>,
    pub eigenvalues: Vec<f64>,
    pub explained_fraction: Vec<f64>,
    /// Candidates × components.
    pub loadings: Matrix,
    pub retained_components: usize,
    /// Catalog order, no duplicates.
    pub selected: Vec<String>,
}

/// Per-dimension PCA and top-loading variable per retained component.
pub fn stage1_dimension_selection(
    table: &AreaTable,
    catalog: &VariableCatalog,
    config: &PipelineConfig,
) -> Result<Vec<DimensionSelection>, IndexError> {
    let mut out = Vec::with_capacity(catalog.dimensions().len());
    for dim in catalog.dimensions() {
        let candidates: Vec<String> = dim.variables.iter().map(|v| v.name.clone()).collect();
        let data = table.matrix(&candidates)?;
        let constant: Vec<&String> = candidates
            .iter()
            .enumerate()
            .filter(|(j, _)| stats::is_constant(&data.column(*j)))
            .map(|(_, n)| n)
            .collect();
        if constant.len() == candidates.len() {
            return Err(IndexError::DimensionConstant(dim.name.clone()));
        }
        if let Some(v) = constant.first() {
            return Err(IndexError::ConstantColumn {
                variable: (*v).clone(),
                dimension: dim.name.clone(),
            });
        }
        let res = pca::fit(&data, &candidates).map_err(pca_at(format!("dimension `{}`", dim.name)))?;
        let m = pca::select_components(&res.explained_fraction, config.variance_threshold);
        let picked: BTreeSet<usize> = (0..m).map(|c| res.top_variable(c)).collect();
        out.push(DimensionSelection {
            dimension: dim.name.clone(),
            selected: picked.iter().map(|&j| candidates[j].clone()).collect(),
            candidates,
            eigenvalues: res.eigenvalues,
            explained_fraction: res.explained_fraction,
            loadings: res.loadings,
            retained_components: m,
        });
    }
    Ok(out)
}

/// Relative slack on the "strictly above the mean" comparison so that
/// magnitudes equal up to rounding count as equal.
const ABOVE_MEAN_TOLERANCE: f64 = 1e-10;

/// Indices whose magnitude is strictly above the mean magnitude, and
/// whether the keep-all fallback fired (nothing strictly above the mean).
pub fn above_mean_rule(magnitudes: &[f64]) -> (Vec<usize>, bool) {
    let mean = stats::mean(magnitudes);
    let keep: Vec<usize> = magnitudes
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > mean * (1.0 + ABOVE_MEAN_TOLERANCE))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        ((0..magnitudes.len()).collect(), true)
    } else {
        (keep, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Selection {
    pub candidates: Vec<String>,
    pub eigenvalues: Vec<f64>,
    /// First-component loadings of the candidates.
    pub first_loadings: Vec<f64>,
    pub mean_abs_loading: f64,
    pub selected: Vec<String>,
    pub fallback: bool,
    pub warnings: Vec<String>,
}

/// PCA over the stage-1 variables; keeps those with first-component
/// |loading| strictly above the mean |loading|.
pub fn stage2_above_mean_selection(
    table: &AreaTable,
    stage1_variables: &[String],
) -> Result<Stage2Selection, IndexError> {
    if stage1_variables.is_empty() {
        return Err(IndexError::TooFewVariables { needed: 1, got: 0 });
    }
    if stage1_variables.len() == 1 {
        return Ok(Stage2Selection {
            candidates: stage1_variables.to_vec(),
            eigenvalues: vec![1.0],
            first_loadings: vec![1.0],
            mean_abs_loading: 1.0,
            selected: stage1_variables.to_vec(),
            fallback: true,
            warnings: vec!["only one variable survived stage 1; it is kept as the final set".into()],
        });
    }
    let data = table.matrix(stage1_variables)?;
    let res = pca::fit(&data, stage1_variables).map_err(pca_at("stage 2"))?;
    let first = res.loading_column(0);
    let magnitudes: Vec<f64> = first.iter().map(|l| l.abs()).collect();
    let (keep, fallback) = above_mean_rule(&magnitudes);
    let mut warnings = Vec::new();
    if fallback {
        warnings.push(format!(
            "all {} stage-2 loadings have equal magnitude; keeping every variable",
            magnitudes.len()
        ));
    }
    Ok(Stage2Selection {
        candidates: stage1_variables.to_vec(),
        eigenvalues: res.eigenvalues,
        mean_abs_loading: stats::mean(&magnitudes),
        first_loadings: first,
        selected: keep.iter().map(|&i| stage1_variables[i].clone()).collect(),
        fallback,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orientation {
    pub scores: Vec<f64>,
    pub loadings: Vec<f64>,
    /// Correlation of the oriented scores with the anchor.
    pub correlation: f64,
    pub flipped: bool,
}

/// Flips the sign of scores and loadings when the scores correlate
/// negatively with `anchor`.
pub fn orient(raw_scores: &[f64], loadings: &[f64], anchor: &[f64]) -> Orientation {
    let r = stats::pearson(raw_scores, anchor).unwrap_or(0.0);
    if r < 0.0 {
        Orientation {
            scores: raw_scores.iter().map(|v| -v).collect(),
            loadings: loadings.iter().map(|v| -v).collect(),
            correlation: -r,
            flipped: true,
        }
    } else {
        Orientation {
            scores: raw_scores.to_vec(),
            loadings: loadings.to_vec(),
            correlation: r,
            flipped: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalComponent {
    pub variables: Vec<String>,
    pub eigenvalues: Vec<f64>,
    pub explained_fraction: Vec<f64>,
    /// Oriented first-component loadings.
    pub loadings: Vec<f64>,
    /// Oriented first-component scores (before scaling to [-1, 1]).
    pub raw_scores: Vec<f64>,
    pub orientation_correlation: f64,
    pub flipped: bool,
}

/// PCA on the final variables; first component scores, oriented against
/// the `anchor` column.
pub fn stage3_final_index(
    table: &AreaTable,
    final_variables: &[String],
    anchor: &[f64],
) -> Result<FinalComponent, IndexError> {
    if final_variables.is_empty() {
        return Err(IndexError::TooFewVariables { needed: 1, got: 0 });
    }
    let data = table.matrix(final_variables)?;
    let res = pca::fit(&data, final_variables).map_err(pca_at("stage 3"))?;
    let o = orient(&res.score_column(0), &res.loading_column(0), anchor);
    Ok(FinalComponent {
        variables: final_variables.to_vec(),
        eigenvalues: res.eigenvalues,
        explained_fraction: res.explained_fraction,
        loadings: o.loadings,
        raw_scores: o.scores,
        orientation_correlation: o.correlation,
        flipped: o.flipped,
    })
}

/// `2 (x - min) / (max - min) - 1`, with min and max landing exactly on -1
/// and +1.
pub fn standardize_scores(raw: &[f64]) -> Result<Vec<f64>, IndexError> {
    stats::min_max_to_unit_interval(raw).ok_or(IndexError::ConstantScores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionRepresentative {
    pub dimension: String,
    pub variable: String,
    /// Pearson correlation of the variable with the index.
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub representatives: Vec<DimensionRepresentative>,
    /// Representative column scaled to [-1, 1], natural sign, one per
    /// representative.
    pub scores: Vec<Vec<f64>>,
    /// Representative column as aggregated (unshifted).
    pub raw: Vec<Vec<f64>>,
    pub inactive: Vec<String>,
}

/// Picks, for each dimension with a final variable, the final variable most
/// correlated (in magnitude) with the index.
pub fn decompose_dimensions(
    index_scores: &[f64],
    final_variables: &[String],
    table: &AreaTable,
    catalog: &VariableCatalog,
) -> Result<Decomposition, IndexError> {
    let finals: BTreeSet<&str> = final_variables.iter().map(String::as_str).collect();
    let mut out = Decomposition {
        representatives: Vec::new(),
        scores: Vec::new(),
        raw: Vec::new(),
        inactive: Vec::new(),
    };
    for dim in catalog.dimensions() {
        let members: Vec<&str> = dim
            .variables
            .iter()
            .map(|v| v.name.as_str())
            .filter(|n| finals.contains(n))
            .collect();
        if members.is_empty() {
            out.inactive.push(dim.name.clone());
            continue;
        }
        let correlations: Vec<f64> = members
            .iter()
            .map(|n| {
                let col = table
                    .column(n)
                    .ok_or_else(|| IngestError::MissingColumn((*n).to_owned()))?;
                Ok(stats::pearson(col, index_scores).unwrap_or(0.0))
            })
            .collect::<Result<_, IndexError>>()?;
        let best = pca::abs_argmax(&correlations);
        let variable = members[best];
        let raw = table.column(variable).expect("checked above").to_vec();
        let scaled = stats::min_max_to_unit_interval(&raw).ok_or_else(|| IndexError::ConstantColumn {
            variable: variable.to_owned(),
            dimension: dim.name.clone(),
        })?;
        out.representatives.push(DimensionRepresentative {
            dimension: dim.name.clone(),
            variable: variable.to_owned(),
            correlation: correlations[best],
        });
        out.scores.push(scaled);
        out.raw.push(raw);
    }
    Ok(out)
}

/// Standardized (correlation-based) Cronbach's alpha for `k` items with mean
/// inter-item correlation `mean_r`.
pub fn standardized_alpha(k: usize, mean_r: f64) -> f64 {
    let k = k as f64;
    k * mean_r / (1.0 + (k - 1.0) * mean_r)
}

/// Standardized Cronbach's alpha of the columns of `data` after flipping
/// those whose loading is negative.
pub fn cronbach_alpha(data: &Matrix, names: &[String], loadings: &[f64]) -> Result<f64, IndexError> {
    let k = data.cols();
    if k < 2 {
        return Err(IndexError::TooFewVariables { needed: 2, got: k });
    }
    assert_eq!(loadings.len(), k, "one loading per column");
    let aligned: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let col = data.column(j);
            if loadings[j] < 0.0 {
                col.iter().map(|v| -v).collect()
            } else {
                col
            }
        })
        .collect();
    let corr = pca::correlation(&Matrix::from_columns(&aligned), names).map_err(pca_at("Cronbach's alpha"))?;
    let off: Vec<f64> = (0..k)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| corr.values[(i, j)])
        .collect();
    Ok(standardized_alpha(k, stats::mean(&off)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexResult {
    pub unit_ids: Vec<String>,
    /// Index in [-1, +1].
    pub scores: Vec<f64>,
    /// Oriented first-component scores before scaling.
    pub raw_first_component: Vec<f64>,
    pub orientation_variable: String,
    pub stage1: Vec<DimensionSelection>,
    pub stage2: Stage2Selection,
    pub stage3: FinalComponent,
    pub decomposition: Decomposition,
    /// `None` when fewer than two variables reach the final stage.
    pub cronbach_alpha: Option<f64>,
    pub warnings: Vec<String>,
}

impl IndexResult {
    pub fn stage1_selected(&self) -> Vec<(&str, &[String])> {
        self.stage1
            .iter()
            .map(|d| (d.dimension.as_str(), d.selected.as_slice()))
            .collect()
    }

    pub fn stage2_selected(&self) -> &[String] {
        &self.stage2.selected
    }

    pub fn final_loadings(&self) -> Vec<(&str, f64)> {
        self.stage3
            .variables
            .iter()
            .map(String::as_str)
            .zip(self.stage3.loadings.iter().copied())
            .collect()
    }

    pub fn dimension_representatives(&self) -> &[DimensionRepresentative] {
        &self.decomposition.representatives
    }

    pub fn active_dimensions(&self) -> Vec<&str> {
        self.decomposition
            .representatives
            .iter()
            .map(|r| r.dimension.as_str())
            .collect()
    }

    pub fn inactive_dimensions(&self) -> &[String] {
        &self.decomposition.inactive
    }

    pub fn dimension_scores(&self, dimension: &str) -> Option<&[f64]> {
        self.decomposition
            .representatives
            .iter()
            .position(|r| r.dimension == dimension)
            .map(|i| self.decomposition.scores[i].as_slice())
    }
}

/// Runs the full pipeline on an aggregated table.
pub fn build_index(
    table: &AreaTable,
    catalog: &VariableCatalog,
    config: &PipelineConfig,
) -> Result<IndexResult, IndexError> {
    config.validate(catalog)?;
    let orientation_variable = config.resolve_orientation(catalog)?.to_owned();
    let original = table.restrict_to_catalog(catalog)?;
    if let Some(c) = original.columns().iter().find(|c| c.values.iter().any(|v| !v.is_finite())) {
        return Err(IndexError::Config(format!("column `{}` has non-finite values", c.name)));
    }
    let shifted = preprocess(&original, config);
    let mut warnings = Vec::new();

    let stage1 = stage1_dimension_selection(&shifted, catalog, config)?;
    let picked: BTreeSet<&str> = stage1
        .iter()
        .flat_map(|d| d.selected.iter().map(String::as_str))
        .collect();
    let stage1_union: Vec<String> = catalog
        .variables()
        .map(|v| v.name.clone())
        .filter(|n| picked.contains(n.as_str()))
        .collect();

    let stage2 = stage2_above_mean_selection(&shifted, &stage1_union)?;
    warnings.extend(stage2.warnings.iter().cloned());

    let anchor = shifted
        .column(&orientation_variable)
        .ok_or_else(|| IngestError::MissingColumn(orientation_variable.clone()))?;
    let stage3 = stage3_final_index(&shifted, &stage2.selected, anchor)?;
    let scores = standardize_scores(&stage3.raw_scores)?;
    let decomposition = decompose_dimensions(&scores, &stage2.selected, &original, catalog)?;

    let cronbach = if stage3.variables.len() >= 2 {
        Some(cronbach_alpha(
            &shifted.matrix(&stage3.variables)?,
            &stage3.variables,
            &stage3.loadings,
        )?)
    } else {
        warnings.push("a single final variable: Cronbach's alpha is undefined".into());
        None
    };

    Ok(IndexResult {
        unit_ids: original.unit_ids().to_vec(),
        raw_first_component: stage3.raw_scores.clone(),
        scores,
        orientation_variable,
        stage1,
        stage2,
        stage3,
        decomposition,
        cronbach_alpha: cronbach,
        warnings,
    })
}

/// Reference columns (e.g. an external development index) keyed by unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub unit_ids: Vec<String>,
    pub columns: Vec<Column>,
}

/// Pearson correlation matrix over the index, each dimension representative
/// (labelled by dimension) and the reference columns.
pub fn compare_with_reference(
    result: &IndexResult,
    reference: &ReferenceTable,
) -> Result<pca::CorrelationMatrix, IndexError> {
    let pos: std::collections::HashMap<&str, usize> = reference
        .unit_ids
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();
    let ours: BTreeSet<&str> = result.unit_ids.iter().map(String::as_str).collect();
    let missing: Vec<String> = result
        .unit_ids
        .iter()
        .filter(|u| !pos.contains_key(u.as_str()))
        .cloned()
        .collect();
    let unexpected: Vec<String> = reference
        .unit_ids
        .iter()
        .filter(|u| !ours.contains(u.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(IndexError::UnitMismatch { missing, unexpected });
    }

    let mut names = vec!["geoses".to_owned()];
    let mut cols: Vec<Vec<f64>> = vec![result.scores.clone()];
    for (rep, raw) in result
        .decomposition
        .representatives
        .iter()
        .zip(&result.decomposition.raw)
    {
        names.push(rep.dimension.clone());
        cols.push(raw.clone());
    }
    for c in &reference.columns {
        if c.values.len() != reference.unit_ids.len() {
            return Err(IndexError::Config(format!("reference column `{}` has the wrong length", c.name)));
        }
        names.push(c.name.clone());
        cols.push(result.unit_ids.iter().map(|u| c.values[pos[u.as_str()]]).collect());
    }
    let k = names.len();
    let mut m = Matrix::identity(k);
    for i in 0..k {
        for j in 0..i {
            let r = stats::pearson(&cols[i], &cols[j]).ok_or_else(|| {
                let which = if stats::is_constant(&cols[i]) { i } else { j };
                IndexError::ConstantReference(names[which].clone())
            })?;
            m[(i, j)] = r;
            m[(j, i)] = r;
        }
    }
    Ok(pca::CorrelationMatrix {
        variable_names: names,
        values: m,
    })
}
