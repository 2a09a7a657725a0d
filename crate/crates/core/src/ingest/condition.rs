//! Record predicates used by aggregation rules.
//!
//! In TOML a condition is an inline table with exactly one form:
//!
//! ```toml
//! { attr = "course", eq = 11 }                 # also ne, lt, le, gt, ge
//! { attr = "race", one_of = ["black", "brown"] }
//! { attr = "income", present = true }
//! { attr = "income", above_percentile = 80 }   # value > region-wide P80
//! { attr = "income", at_or_below_percentile = 20 }
//! { all = [ ... ] }  { any = [ ... ] }  { not = { ... } }  { always = true }
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::records::{AttrValue, MicroRecord};
use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PercentileSide {
    Above,
    AtOrBelow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Always,
    Present(String),
    Compare {
        attr: String,
        op: CmpOp,
        value: AttrValue,
    },
    OneOf {
        attr: String,
        values: Vec<AttrValue>,
    },
    /// Compared against a cut point resolved over the whole study region.
    Percentile {
        attr: String,
        pct: f64,
        side: PercentileSide,
    },
    All(Vec<Condition>),
    Any(Vec<Condition>),
    Not(Box<Condition>),
}

/// Region-wide percentile cut points keyed by (attribute, percentile).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cuts(BTreeMap<(String, u64), f64>);

impl Cuts {
    pub fn insert(&mut self, attr: &str, pct: f64, value: f64) {
        self.0.insert((attr.to_owned(), pct.to_bits()), value);
    }

    pub fn get(&self, attr: &str, pct: f64) -> Option<f64> {
        self.0.get(&(attr.to_owned(), pct.to_bits())).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64, f64)> {
        self.0
            .iter()
            .map(|((a, p), v)| (a.as_str(), f64::from_bits(*p), *v))
    }
}

impl Condition {
    pub fn eq(attr: &str, value: f64) -> Self {
        Condition::Compare {
            attr: attr.to_owned(),
            op: CmpOp::Eq,
            value: AttrValue::Number(value),
        }
    }

    pub fn present(attr: &str) -> Self {
        Condition::Present(attr.to_owned())
    }

    /// Evaluates the predicate. Comparisons on a missing attribute are false.
    ///
    /// Panics if a percentile condition has no entry in `cuts`; callers
    /// resolve every percentile reference before evaluating.
    pub fn eval(&self, rec: &MicroRecord, cuts: &Cuts) -> bool {
        match self {
            Condition::Always => true,
            Condition::Present(a) => rec.get(a).is_some(),
            Condition::Compare { attr, op, value } => match rec.get(attr) {
                None => false,
                Some(v) => match op {
                    CmpOp::Eq => v.matches(value),
                    CmpOp::Ne => !v.matches(value),
                    _ => match (v.as_number(), value.as_number()) {
                        (Some(x), Some(y)) => match op {
                            CmpOp::Lt => x < y,
                            CmpOp::Le => x <= y,
                            CmpOp::Gt => x > y,
                            CmpOp::Ge => x >= y,
                            CmpOp::Eq | CmpOp::Ne => unreachable!(),
                        },
                        _ => false,
                    },
                },
            },
            Condition::OneOf { attr, values } => rec
                .get(attr)
                .is_some_and(|v| values.iter().any(|c| v.matches(c))),
            Condition::Percentile { attr, pct, side } => {
                let cut = cuts
                    .get(attr, *pct)
                    .unwrap_or_else(|| panic!("unresolved percentile cut {attr}@{pct}"));
                match rec.number(attr) {
                    None => false,
                    Some(x) => match side {
                        PercentileSide::Above => x > cut,
                        PercentileSide::AtOrBelow => x <= cut,
                    },
                }
            }
            Condition::All(cs) => cs.iter().all(|c| c.eval(rec, cuts)),
            Condition::Any(cs) => cs.iter().any(|c| c.eval(rec, cuts)),
            Condition::Not(c) => !c.eval(rec, cuts),
        }
    }

    /// Attributes referenced anywhere in the condition.
    pub fn attributes(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_attributes(&mut out);
        out
    }

    fn collect_attributes(&self, out: &mut BTreeSet<String>) {
        match self {
            Condition::Always => {}
            Condition::Present(a)
            | Condition::Compare { attr: a, .. }
            | Condition::OneOf { attr: a, .. }
            | Condition::Percentile { attr: a, .. } => {
                out.insert(a.clone());
            }
            Condition::All(cs) | Condition::Any(cs) => {
                cs.iter().for_each(|c| c.collect_attributes(out))
            }
            Condition::Not(c) => c.collect_attributes(out),
        }
    }

    /// (attribute, percentile) pairs that need region-wide cut points.
    pub fn percentile_refs(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        self.collect_percentiles(&mut out);
        out
    }

    fn collect_percentiles(&self, out: &mut Vec<(String, f64)>) {
        match self {
            Condition::Percentile { attr, pct, .. } => out.push((attr.clone(), *pct)),
            Condition::All(cs) | Condition::Any(cs) => {
                cs.iter().for_each(|c| c.collect_percentiles(out))
            }
            Condition::Not(c) => c.collect_percentiles(out),
            _ => {}
        }
    }

    /// "Respondents" to every attribute the condition mentions.
    pub fn respondents_of(conditions: &[&Condition]) -> Condition {
        let attrs: BTreeSet<String> = conditions.iter().flat_map(|c| c.attributes()).collect();
        if attrs.is_empty() {
            Condition::Always
        } else {
            Condition::All(attrs.into_iter().map(Condition::Present).collect())
        }
    }
}

/// Serialized form; see the module docs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eq: Option<toml::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ne: Option<toml::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub le: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_of: Option<Vec<toml::Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub present: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub above_percentile: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_or_below_percentile: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all: Option<Vec<ConditionSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub any: Option<Vec<ConditionSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not: Option<Box<ConditionSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub always: Option<bool>,
}

fn toml_to_attr(v: &toml::Value) -> Result<AttrValue, String> {
    match v {
        toml::Value::Integer(i) => Ok(AttrValue::Number(*i as f64)),
        toml::Value::Float(f) => Ok(AttrValue::Number(*f)),
        toml::Value::String(s) => Ok(AttrValue::Text(s.clone())),
        toml::Value::Boolean(b) => Ok(AttrValue::Number(if *b { 1.0 } else { 0.0 })),
        other => Err(format!("unsupported comparison value {other}")),
    }
}

fn attr_to_toml(v: &AttrValue) -> toml::Value {
    match v {
        AttrValue::Number(x) if x.fract() == 0.0 && x.abs() < 1e15 => toml::Value::Integer(*x as i64),
        AttrValue::Number(x) => toml::Value::Float(*x),
        AttrValue::Text(s) => toml::Value::String(s.clone()),
    }
}

impl ConditionSpec {
    pub fn to_condition(&self) -> Result<Condition, IngestError> {
        let bad = |msg: String| IngestError::Config(msg);
        let combinators = [
            self.all.is_some(),
            self.any.is_some(),
            self.not.is_some(),
            self.always.is_some(),
        ];
        let predicates = [
            self.eq.is_some(),
            self.ne.is_some(),
            self.lt.is_some(),
            self.le.is_some(),
            self.gt.is_some(),
            self.ge.is_some(),
            self.one_of.is_some(),
            self.present.is_some(),
            self.above_percentile.is_some(),
            self.at_or_below_percentile.is_some(),
        ];
        let n_comb = combinators.iter().filter(|b| **b).count();
        let n_pred = predicates.iter().filter(|b| **b).count();
        if n_comb + n_pred != 1 {
            return Err(bad(format!(
                "a condition needs exactly one predicate or combinator, got {}",
                n_comb + n_pred
            )));
        }
        if n_comb == 1 {
            if self.attr.is_some() {
                return Err(bad("`attr` cannot be combined with all/any/not/always".into()));
            }
            if let Some(cs) = &self.all {
                return Ok(Condition::All(
                    cs.iter().map(|c| c.to_condition()).collect::<Result<_, _>>()?,
                ));
            }
            if let Some(cs) = &self.any {
                return Ok(Condition::Any(
                    cs.iter().map(|c| c.to_condition()).collect::<Result<_, _>>()?,
                ));
            }
            if let Some(c) = &self.not {
                return Ok(Condition::Not(Box::new(c.to_condition()?)));
            }
            return match self.always {
                Some(true) => Ok(Condition::Always),
                _ => Ok(Condition::Not(Box::new(Condition::Always))),
            };
        }
        let attr = self
            .attr
            .clone()
            .ok_or_else(|| bad("predicate without `attr`".into()))?;
        let cmp = |op, value: AttrValue| Condition::Compare {
            attr: attr.clone(),
            op,
            value,
        };
        if let Some(v) = &self.eq {
            return Ok(cmp(CmpOp::Eq, toml_to_attr(v).map_err(bad)?));
        }
        if let Some(v) = &self.ne {
            return Ok(cmp(CmpOp::Ne, toml_to_attr(v).map_err(bad)?));
        }
        for (v, op) in [
            (self.lt, CmpOp::Lt),
            (self.le, CmpOp::Le),
            (self.gt, CmpOp::Gt),
            (self.ge, CmpOp::Ge),
        ] {
            if let Some(v) = v {
                return Ok(cmp(op, AttrValue::Number(v)));
            }
        }
        if let Some(vs) = &self.one_of {
            return Ok(Condition::OneOf {
                attr,
                values: vs.iter().map(toml_to_attr).collect::<Result<_, _>>().map_err(bad)?,
            });
        }
        if let Some(p) = self.present {
            let c = Condition::Present(attr);
            return Ok(if p { c } else { Condition::Not(Box::new(c)) });
        }
        let (pct, side) = match (self.above_percentile, self.at_or_below_percentile) {
            (Some(p), None) => (p, PercentileSide::Above),
            (None, Some(p)) => (p, PercentileSide::AtOrBelow),
            _ => unreachable!(),
        };
        if !(0.0..=100.0).contains(&pct) {
            return Err(bad(format!("percentile {pct} outside [0, 100]")));
        }
        Ok(Condition::Percentile { attr, pct, side })
    }

    pub fn from_condition(c: &Condition) -> ConditionSpec {
        let with_attr = |a: &str| ConditionSpec {
            attr: Some(a.to_owned()),
            ..Default::default()
        };
        match c {
            Condition::Always => ConditionSpec {
                always: Some(true),
                ..Default::default()
            },
            Condition::Present(a) => ConditionSpec {
                present: Some(true),
                ..with_attr(a)
            },
            Condition::Compare { attr, op, value } => {
                let mut s = with_attr(attr);
                let num = value.as_number();
                match op {
                    CmpOp::Eq => s.eq = Some(attr_to_toml(value)),
                    CmpOp::Ne => s.ne = Some(attr_to_toml(value)),
                    CmpOp::Lt => s.lt = num,
                    CmpOp::Le => s.le = num,
                    CmpOp::Gt => s.gt = num,
                    CmpOp::Ge => s.ge = num,
                }
                s
            }
            Condition::OneOf { attr, values } => ConditionSpec {
                one_of: Some(values.iter().map(attr_to_toml).collect()),
                ..with_attr(attr)
            },
            Condition::Percentile { attr, pct, side } => {
                let mut s = with_attr(attr);
                match side {
                    PercentileSide::Above => s.above_percentile = Some(*pct),
                    PercentileSide::AtOrBelow => s.at_or_below_percentile = Some(*pct),
                }
                s
            }
            Condition::All(cs) => ConditionSpec {
                all: Some(cs.iter().map(ConditionSpec::from_condition).collect()),
                ..Default::default()
            },
            Condition::Any(cs) => ConditionSpec {
                any: Some(cs.iter().map(ConditionSpec::from_condition).collect()),
                ..Default::default()
            },
            Condition::Not(c) => ConditionSpec {
                not: Some(Box::new(ConditionSpec::from_condition(c))),
                ..Default::default()
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Condition, IngestError> {
        #[derive(Deserialize)]
        struct W {
            c: ConditionSpec,
        }
        let w: W = toml::from_str(&format!("c = {s}")).unwrap();
        w.c.to_condition()
    }

    #[test]
    fn parses_predicates_and_combinators() {
        let rec = MicroRecord::new("A", 1.0)
            .with_num("course", 11.0)
            .with("race", AttrValue::Text("black".into()));
        let cuts = Cuts::default();
        assert!(parse("{ attr = \"course\", eq = 11 }").unwrap().eval(&rec, &cuts));
        assert!(parse("{ attr = \"course\", ge = 10.5 }").unwrap().eval(&rec, &cuts));
        assert!(parse("{ attr = \"race\", one_of = [\"black\", \"brown\"] }")
            .unwrap()
            .eval(&rec, &cuts));
        assert!(parse("{ not = { attr = \"income\", present = true } }")
            .unwrap()
            .eval(&rec, &cuts));
        assert!(parse("{ all = [{ attr = \"course\", lt = 12 }, { attr = \"race\", ne = \"white\" }] }")
            .unwrap()
            .eval(&rec, &cuts));
    }

    #[test]
    fn rejects_ambiguous_condition() {
        assert!(parse("{ attr = \"a\", eq = 1, gt = 0 }").is_err());
        assert!(parse("{ attr = \"a\" }").is_err());
        assert!(parse("{ attr = \"a\", above_percentile = 120 }").is_err());
    }

    #[test]
    fn percentile_uses_resolved_cut() {
        let c = parse("{ attr = \"income\", above_percentile = 80 }").unwrap();
        let mut cuts = Cuts::default();
        cuts.insert("income", 80.0, 5400.0);
        assert!(c.eval(&MicroRecord::new("A", 1.0).with_num("income", 5400.5), &cuts));
        assert!(!c.eval(&MicroRecord::new("A", 1.0).with_num("income", 5400.0), &cuts));
        assert_eq!(c.percentile_refs(), vec![("income".to_owned(), 80.0)]);
    }

    #[test]
    fn spec_round_trip() {
        let c = parse("{ any = [{ attr = \"x\", eq = 2 }, { attr = \"y\", at_or_below_percentile = 20 }, { always = true }] }")
            .unwrap();
        assert_eq!(ConditionSpec::from_condition(&c).to_condition().unwrap(), c);
    }
}
