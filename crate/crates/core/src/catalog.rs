//! Dimension/variable schema.
//!
//! A catalog is an ordered list of dimensions, each holding an ordered list of
//! variables. It is plain TOML so the pipeline can be re-parameterised for other
//! census editions; the 46-variable, seven-dimension default ships with the
//! crate (see `data/default_catalog.toml`).
//!
//! ```toml
//! [[dimensions]]
//! name = "segregation"
//! segregation = true        # optional, required for ice_ratio variables
//!
//! [[dimensions.variables]]
//! name = "ICE_renda"
//! kind = "ice_ratio"        # percentage | weighted_mean | ice_ratio
//! polarity = "favorable"    # favorable | unfavorable | neutral (labels only)
//! description = "..."
//! ```

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const DEFAULT_CATALOG: &str = include_str!("../data/default_catalog.toml");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("duplicate dimension name `{0}`")]
    DuplicateDimension(String),
    #[error("dimension `{0}` has no variables")]
    EmptyDimension(String),
    #[error("catalog has no dimensions")]
    Empty,
    #[error("variable `{variable}` has unknown kind `{kind}`")]
    UnknownKind { variable: String, kind: String },
    #[error("variable `{variable}` has unknown polarity `{polarity}`")]
    UnknownPolarity { variable: String, polarity: String },
    #[error("ICE variable `{variable}` is in dimension `{dimension}`, which is not flagged `segregation = true`")]
    IceOutsideSegregation { variable: String, dimension: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariableKind {
    Percentage,
    WeightedMean,
    IceRatio,
}

impl VariableKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VariableKind::Percentage => "percentage",
            VariableKind::WeightedMean => "weighted_mean",
            VariableKind::IceRatio => "ice_ratio",
        }
    }
}

impl FromStr for VariableKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "percentage" => Ok(VariableKind::Percentage),
            "weighted_mean" => Ok(VariableKind::WeightedMean),
            "ice_ratio" => Ok(VariableKind::IceRatio),
            _ => Err(()),
        }
    }
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Report label only. Index signs are derived from data, never from this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Polarity {
    Favorable,
    Unfavorable,
    #[default]
    Neutral,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Favorable => "favorable",
            Polarity::Unfavorable => "unfavorable",
            Polarity::Neutral => "neutral",
        }
    }
}

impl FromStr for Polarity {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "favorable" => Ok(Polarity::Favorable),
            "unfavorable" => Ok(Polarity::Unfavorable),
            "neutral" => Ok(Polarity::Neutral),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableDef {
    pub name: String,
    pub dimension: String,
    pub kind: VariableKind,
    pub description: String,
    pub polarity_hint: Polarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub segregation: bool,
    pub variables: Vec<VariableDef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableCatalog {
    dimensions: Vec<Dimension>,
}

// On-disk layout.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    dimensions: Vec<DimensionFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimensionFile {
    name: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    segregation: bool,
    #[serde(default)]
    variables: Vec<VariableFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableFile {
    name: String,
    kind: String,
    #[serde(default = "neutral")]
    polarity: String,
    #[serde(default)]
    description: String,
}

fn neutral() -> String {
    "neutral".to_owned()
}

impl VariableCatalog {
    /// The bundled seven-dimension, 46-variable catalog.
    pub fn default_catalog() -> Self {
        Self::from_toml_str(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }

    pub fn from_toml_str(source: &str) -> Result<Self, CatalogError> {
        let file: CatalogFile = toml::from_str(source)?;
        Self::from_file(file)
    }

    fn from_file(file: CatalogFile) -> Result<Self, CatalogError> {
        if file.dimensions.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut seen_dims = HashSet::new();
        let mut seen_vars = HashSet::new();
        let mut dimensions = Vec::with_capacity(file.dimensions.len());
        for d in file.dimensions {
            if !seen_dims.insert(d.name.clone()) {
                return Err(CatalogError::DuplicateDimension(d.name));
            }
            if d.variables.is_empty() {
                return Err(CatalogError::EmptyDimension(d.name));
            }
            let mut variables = Vec::with_capacity(d.variables.len());
            for v in d.variables {
                if !seen_vars.insert(v.name.clone()) {
                    return Err(CatalogError::DuplicateVariable(v.name));
                }
                let kind = v.kind.parse().map_err(|_| CatalogError::UnknownKind {
                    variable: v.name.clone(),
                    kind: v.kind.clone(),
                })?;
                let polarity_hint =
                    v.polarity.parse().map_err(|_| CatalogError::UnknownPolarity {
                        variable: v.name.clone(),
                        polarity: v.polarity.clone(),
                    })?;
                if kind == VariableKind::IceRatio && !d.segregation {
                    return Err(CatalogError::IceOutsideSegregation {
                        variable: v.name,
                        dimension: d.name,
                    });
                }
                variables.push(VariableDef {
                    name: v.name,
                    dimension: d.name.clone(),
                    kind,
                    description: v.description,
                    polarity_hint,
                });
            }
            dimensions.push(Dimension {
                name: d.name,
                segregation: d.segregation,
                variables,
            });
        }
        Ok(Self { dimensions })
    }

    pub fn to_toml_string(&self) -> String {
        let file = CatalogFile {
            dimensions: self
                .dimensions
                .iter()
                .map(|d| DimensionFile {
                    name: d.name.clone(),
                    segregation: d.segregation,
                    variables: d
                        .variables
                        .iter()
                        .map(|v| VariableFile {
                            name: v.name.clone(),
                            kind: v.kind.as_str().to_owned(),
                            polarity: v.polarity_hint.as_str().to_owned(),
                            description: v.description.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("catalog serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    /// All variables in catalog order.
    pub fn variables(&self) -> impl Iterator<Item = &VariableDef> {
        self.dimensions.iter().flat_map(|d| d.variables.iter())
    }

    pub fn variable(&self, name: &str) -> Option<&VariableDef> {
        self.variables().find(|v| v.name == name)
    }

    /// Position of a variable in catalog order.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.variables().position(|v| v.name == name)
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables().map(|v| v.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.variables().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The weighted-mean variable of a dimension called `income`, if any:
    /// the default orientation anchor for the index sign.
    pub fn default_orientation_variable(&self) -> Option<&str> {
        let income = self.dimension("income")?;
        income
            .variables
            .iter()
            .find(|v| v.kind == VariableKind::WeightedMean)
            .or_else(|| income.variables.first())
            .map(|v| v.name.as_str())
    }
}

impl Default for VariableCatalog {
    fn default() -> Self {
        Self::default_catalog()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalog_shape() {
        let c = VariableCatalog::default_catalog();
        let counts: Vec<(&str, usize)> = c
            .dimensions()
            .iter()
            .map(|d| (d.name.as_str(), d.variables.len()))
            .collect();
        assert_eq!(
            counts,
            vec![
                ("education", 7),
                ("mobility", 6),
                ("poverty", 5),
                ("wealth", 3),
                ("income", 1),
                ("segregation", 5),
                ("deprivation", 19),
            ]
        );
        assert_eq!(c.len(), 46);
        let unique: HashSet<_> = c.variables().map(|v| &v.name).collect();
        assert_eq!(unique.len(), 46);
        assert_eq!(c.default_orientation_variable(), Some("MED_RENDDOM"));
    }

    #[test]
    fn default_catalog_lists_expected_variables() {
        let c = VariableCatalog::default_catalog();
        for name in [
            "P_GRAD",
            "P_MAISDE2",
            "MEDIA_DENSMORA",
            "P_IDOSO10SM",
            "MED_RENDDOM",
            "ICE_renda",
            "ICEedu",
            "ICE_renda_preto",
            "ICE_renda_ppi",
            "ICE_branco_renda",
            "P_SO_CARRO",
        ] {
            assert!(c.variable(name).is_some(), "{name} missing");
        }
        let seg = c.dimension("segregation").unwrap();
        assert!(seg.variables.iter().all(|v| v.kind == VariableKind::IceRatio));
    }

    #[test]
    fn minimal_catalog() {
        let c = VariableCatalog::from_toml_str(
            r#"
            [[dimensions]]
            name = "education"
            [[dimensions.variables]]
            name = "P_GRAD"
            kind = "percentage"
            "#,
        )
        .unwrap();
        assert_eq!(c.dimensions().len(), 1);
        assert_eq!(c.variable("P_GRAD").unwrap().dimension, "education");
        assert_eq!(c.variable("P_GRAD").unwrap().polarity_hint, Polarity::Neutral);
    }

    #[test]
    fn duplicate_name_rejected() {
        let err = VariableCatalog::from_toml_str(
            r#"
            [[dimensions]]
            name = "a"
            [[dimensions.variables]]
            name = "P_GRAD"
            kind = "percentage"
            [[dimensions]]
            name = "b"
            [[dimensions.variables]]
            name = "P_GRAD"
            kind = "percentage"
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, CatalogError::DuplicateVariable(n) if n == "P_GRAD"));
    }

    #[test]
    fn empty_dimension_and_unknown_kind_rejected() {
        let err = VariableCatalog::from_toml_str("[[dimensions]]\nname = \"a\"\n").unwrap_err();
        assert!(matches!(err, CatalogError::EmptyDimension(_)));
        let err = VariableCatalog::from_toml_str(
            "[[dimensions]]\nname = \"a\"\n[[dimensions.variables]]\nname = \"x\"\nkind = \"median\"\n",
        )
        .unwrap_err();
        assert!(matches!(err, CatalogError::UnknownKind { .. }));
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = VariableCatalog::from_toml_str(
            "[[dimensions]]\nname = \"a\"\ncolour = 1\n[[dimensions.variables]]\nname = \"x\"\nkind = \"percentage\"\n",
        )
        .unwrap_err();
        assert!(matches!(err, CatalogError::Parse(_)));
    }

    #[test]
    fn ice_requires_segregation_dimension() {
        let err = VariableCatalog::from_toml_str(
            "[[dimensions]]\nname = \"a\"\n[[dimensions.variables]]\nname = \"ICE\"\nkind = \"ice_ratio\"\n",
        )
        .unwrap_err();
        assert!(matches!(err, CatalogError::IceOutsideSegregation { .. }));
    }

    #[test]
    fn round_trip_is_stable() {
        let c = VariableCatalog::default_catalog();
        let again = VariableCatalog::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.content_hash(), again.content_hash());
    }
}
