//! Mapping from catalog variables to record predicates.
//!
//! ```toml
//! [variables.P_GRAD]
//! universe = "persons"
//! numerator = { attr = "course", eq = 11 }
//! denominator = { attr = "course", present = true }   # optional
//!
//! [variables.MED_RENDDOM]
//! universe = "households"
//! mean_of = "income"
//! filter = { attr = "occupied", eq = 1 }              # optional
//!
//! [variables.ICE_renda]
//! universe = "persons"
//! top = { attr = "income", above_percentile = 80 }
//! bottom = { attr = "income", at_or_below_percentile = 20 }
//! total = { attr = "income", present = true }          # optional
//! ```
//!
//! An omitted denominator (or ICE total) defaults to the respondents of the
//! numerator (or of top and bottom): records where every referenced attribute
//! is present.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::condition::{Condition, ConditionSpec};
use super::IngestError;
use crate::catalog::{VariableCatalog, VariableKind};

#[derive(Debug, Clone, PartialEq)]
pub enum AggregationRule {
    Percentage {
        universe: String,
        numerator: Condition,
        denominator: Condition,
    },
    WeightedMean {
        universe: String,
        attribute: String,
        filter: Condition,
    },
    Ice {
        universe: String,
        top: Condition,
        bottom: Condition,
        total: Condition,
    },
}

impl AggregationRule {
    pub fn universe(&self) -> &str {
        match self {
            AggregationRule::Percentage { universe, .. }
            | AggregationRule::WeightedMean { universe, .. }
            | AggregationRule::Ice { universe, .. } => universe,
        }
    }

    pub fn kind(&self) -> VariableKind {
        match self {
            AggregationRule::Percentage { .. } => VariableKind::Percentage,
            AggregationRule::WeightedMean { .. } => VariableKind::WeightedMean,
            AggregationRule::Ice { .. } => VariableKind::IceRatio,
        }
    }

    pub fn conditions(&self) -> Vec<&Condition> {
        match self {
            AggregationRule::Percentage {
                numerator,
                denominator,
                ..
            } => vec![numerator, denominator],
            AggregationRule::WeightedMean { filter, .. } => vec![filter],
            AggregationRule::Ice {
                top, bottom, total, ..
            } => vec![top, bottom, total],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub universe: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numerator: Option<ConditionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denominator: Option<ConditionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_of: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<ConditionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top: Option<ConditionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bottom: Option<ConditionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<ConditionSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesFile {
    variables: BTreeMap<String, RuleSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationRules {
    rules: BTreeMap<String, AggregationRule>,
}

impl AggregationRules {
    pub fn from_toml_str(source: &str, catalog: &VariableCatalog) -> Result<Self, IngestError> {
        let file: RulesFile =
            toml::from_str(source).map_err(|e| IngestError::Config(format!("rules file: {e}")))?;
        Self::from_specs(file.variables, catalog)
    }

    pub fn from_specs(
        specs: BTreeMap<String, RuleSpec>,
        catalog: &VariableCatalog,
    ) -> Result<Self, IngestError> {
        for name in specs.keys() {
            if catalog.variable(name).is_none() {
                return Err(IngestError::Config(format!(
                    "rule for `{name}`, which is not in the catalog"
                )));
            }
        }
        let mut rules = BTreeMap::new();
        for var in catalog.variables() {
            let spec = specs
                .get(&var.name)
                .ok_or_else(|| IngestError::Config(format!("no aggregation rule for `{}`", var.name)))?;
            let rule = to_rule(&var.name, var.kind, spec)?;
            rules.insert(var.name.clone(), rule);
        }
        Ok(Self { rules })
    }

    pub fn get(&self, variable: &str) -> Option<&AggregationRule> {
        self.rules.get(variable)
    }

    pub fn to_toml_string(&self) -> String {
        let file = RulesFile {
            variables: self
                .rules
                .iter()
                .map(|(k, r)| (k.clone(), to_spec(r)))
                .collect(),
        };
        toml::to_string(&file).expect("rules serialize")
    }
}

fn to_rule(name: &str, kind: VariableKind, spec: &RuleSpec) -> Result<AggregationRule, IngestError> {
    let err = |msg: &str| IngestError::Config(format!("rule for `{name}` ({kind}): {msg}"));
    let conv = |c: &Option<ConditionSpec>| c.as_ref().map(ConditionSpec::to_condition).transpose();
    let universe = spec.universe.clone();
    if universe.is_empty() {
        return Err(err("empty universe"));
    }
    let fields_for = |allowed: &[&str]| {
        let present = [
            ("numerator", spec.numerator.is_some()),
            ("denominator", spec.denominator.is_some()),
            ("mean_of", spec.mean_of.is_some()),
            ("filter", spec.filter.is_some()),
            ("top", spec.top.is_some()),
            ("bottom", spec.bottom.is_some()),
            ("total", spec.total.is_some()),
        ];
        match present.iter().find(|(f, p)| *p && !allowed.contains(f)) {
            Some((f, _)) => Err(err(&format!("field `{f}` does not apply"))),
            None => Ok(()),
        }
    };
    match kind {
        VariableKind::Percentage => {
            fields_for(&["numerator", "denominator"])?;
            let numerator = conv(&spec.numerator)?.ok_or_else(|| err("missing `numerator`"))?;
            let denominator = match conv(&spec.denominator)? {
                Some(d) => d,
                None => Condition::respondents_of(&[&numerator]),
            };
            Ok(AggregationRule::Percentage {
                universe,
                numerator,
                denominator,
            })
        }
        VariableKind::WeightedMean => {
            fields_for(&["mean_of", "filter"])?;
            let attribute = spec.mean_of.clone().ok_or_else(|| err("missing `mean_of`"))?;
            Ok(AggregationRule::WeightedMean {
                universe,
                attribute,
                filter: conv(&spec.filter)?.unwrap_or(Condition::Always),
            })
        }
        VariableKind::IceRatio => {
            fields_for(&["top", "bottom", "total"])?;
            let top = conv(&spec.top)?.ok_or_else(|| err("missing `top`"))?;
            let bottom = conv(&spec.bottom)?.ok_or_else(|| err("missing `bottom`"))?;
            let total = match conv(&spec.total)? {
                Some(t) => t,
                None => Condition::respondents_of(&[&top, &bottom]),
            };
            Ok(AggregationRule::Ice {
                universe,
                top,
                bottom,
                total,
            })
        }
    }
}

fn to_spec(rule: &AggregationRule) -> RuleSpec {
    let c = |c: &Condition| Some(ConditionSpec::from_condition(c));
    match rule {
        AggregationRule::Percentage {
            universe,
            numerator,
            denominator,
        } => RuleSpec {
            universe: universe.clone(),
            numerator: c(numerator),
            denominator: c(denominator),
            ..Default::default()
        },
        AggregationRule::WeightedMean {
            universe,
            attribute,
            filter,
        } => RuleSpec {
            universe: universe.clone(),
            mean_of: Some(attribute.clone()),
            filter: c(filter),
            ..Default::default()
        },
        AggregationRule::Ice {
            universe,
            top,
            bottom,
            total,
        } => RuleSpec {
            universe: universe.clone(),
            top: c(top),
            bottom: c(bottom),
            total: c(total),
            ..Default::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> VariableCatalog {
        VariableCatalog::from_toml_str(
            r#"
            [[dimensions]]
            name = "education"
            [[dimensions.variables]]
            name = "P_GRAD"
            kind = "percentage"
            [[dimensions]]
            name = "income"
            [[dimensions.variables]]
            name = "MED_RENDDOM"
            kind = "weighted_mean"
            [[dimensions]]
            name = "segregation"
            segregation = true
            [[dimensions.variables]]
            name = "ICE_renda"
            kind = "ice_ratio"
            "#,
        )
        .unwrap()
    }

    const RULES: &str = r#"
        [variables.P_GRAD]
        universe = "persons"
        numerator = { attr = "course", eq = 11 }

        [variables.MED_RENDDOM]
        universe = "households"
        mean_of = "income"

        [variables.ICE_renda]
        universe = "persons"
        top = { attr = "income", above_percentile = 80 }
        bottom = { attr = "income", at_or_below_percentile = 20 }
    "#;

    #[test]
    fn default_denominator_is_respondents() {
        let rules = AggregationRules::from_toml_str(RULES, &catalog()).unwrap();
        match rules.get("P_GRAD").unwrap() {
            AggregationRule::Percentage { denominator, .. } => {
                assert_eq!(*denominator, Condition::All(vec![Condition::present("course")]))
            }
            other => panic!("unexpected {other:?}"),
        }
        match rules.get("ICE_renda").unwrap() {
            AggregationRule::Ice { total, .. } => {
                assert_eq!(*total, Condition::All(vec![Condition::present("income")]))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kind_mismatch_and_missing_rules_rejected() {
        let bad = RULES.replace("mean_of = \"income\"", "numerator = { attr = \"x\", eq = 1 }");
        assert!(AggregationRules::from_toml_str(&bad, &catalog()).is_err());
        let missing = "[variables.P_GRAD]\nuniverse = \"persons\"\nnumerator = { attr = \"c\", eq = 1 }\n";
        assert!(AggregationRules::from_toml_str(missing, &catalog()).is_err());
    }

    #[test]
    fn serializes_back() {
        let rules = AggregationRules::from_toml_str(RULES, &catalog()).unwrap();
        let again = AggregationRules::from_toml_str(&rules.to_toml_string(), &catalog()).unwrap();
        assert_eq!(rules, again);
    }
}
