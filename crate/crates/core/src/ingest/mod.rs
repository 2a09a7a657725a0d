//! Aggregation of weighted micro records into per-unit variable values.

mod aggregate;
mod condition;
mod records;
mod rules;
mod table;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub use aggregate::{
    aggregate_percentage, aggregate_weighted_mean, compute_ice, derive_ice_thresholds,
    weighted_quantile, PerUnit, Thresholds, UnitAggregate,
};
pub use condition::{CmpOp, Condition, ConditionSpec, Cuts, PercentileSide};
pub use records::{read_records, AttrValue, MicroRecord, RecordFormat, RecordSets};
pub use rules::{AggregationRule, AggregationRules, RuleSpec};
pub use table::{format_sig15, read_coordinates, AreaTable, Column};

use crate::catalog::VariableCatalog;

/// ICE cut points are the region-wide 20th and 80th weighted percentiles.
pub const ICE_LOWER_PCT: f64 = 20.0;
pub const ICE_UPPER_PCT: f64 = 80.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("delimited input: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("no numeric values for attribute `{0}`")]
    NoValues(String),
    #[error("units without coordinates: {}", .0.join(", "))]
    MissingCoordinates(Vec<String>),
    #[error("no records for universe `{0}`")]
    MissingUniverse(String),
    #[error("table shape: {0}")]
    Shape(String),
    #[error("variable `{variable}` out of range in unit `{unit}`: {value}")]
    OutOfRange {
        variable: String,
        unit: String,
        value: f64,
    },
    #[error("every unit was dropped by the missing-unit policy")]
    NoUnitsLeft,
}

/// What to do with a unit whose denominator weight is zero for some variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    DropUnit,
    ImputeRegionMean,
}

impl std::str::FromStr for MissingPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "drop_unit" => Ok(MissingPolicy::DropUnit),
            "impute_region_mean" => Ok(MissingPolicy::ImputeRegionMean),
            other => Err(format!("unknown missing-unit policy `{other}`")),
        }
    }
}

impl fmt::Display for MissingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MissingPolicy::DropUnit => "drop_unit",
            MissingPolicy::ImputeRegionMean => "impute_region_mean",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuditEntry {
    /// A variable had no denominator weight in a unit.
    Missing { unit: String, variable: String },
    Dropped { unit: String },
    Imputed { unit: String, variable: String, value: f64 },
    Threshold { universe: String, attribute: String, pct: f64, value: f64 },
    Warning(String),
}

impl fmt::Display for AuditEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditEntry::Missing { unit, variable } => {
                write!(f, "missing: unit `{unit}` has zero denominator weight for `{variable}`")
            }
            AuditEntry::Dropped { unit } => write!(f, "dropped: unit `{unit}`"),
            AuditEntry::Imputed { unit, variable, value } => {
                write!(f, "imputed: unit `{unit}` `{variable}` = {value}")
            }
            AuditEntry::Threshold { universe, attribute, pct, value } => {
                write!(f, "threshold: {universe}.{attribute} P{pct} = {value}")
            }
            AuditEntry::Warning(w) => write!(f, "warning: {w}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditLog {
    pub entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn push(&mut self, e: AuditEntry) {
        self.entries.push(e);
    }

    pub fn dropped_units(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                AuditEntry::Dropped { unit } => Some(unit.as_str()),
                _ => None,
            })
            .collect()
    }
}

/// Resolves region-wide cut points for every percentile reference in `rules`.
pub fn resolve_cuts(
    records: &RecordSets,
    catalog: &VariableCatalog,
    rules: &AggregationRules,
    audit: &mut AuditLog,
) -> Result<BTreeMap<String, Cuts>, IngestError> {
    let mut wanted: BTreeMap<String, BTreeSet<(String, u64)>> = BTreeMap::new();
    for var in catalog.variables() {
        let rule = rules.get(&var.name).expect("rules cover the catalog");
        for c in rule.conditions() {
            for (attr, pct) in c.percentile_refs() {
                wanted
                    .entry(rule.universe().to_owned())
                    .or_default()
                    .insert((attr, pct.to_bits()));
            }
        }
    }
    let mut out = BTreeMap::new();
    for (universe, refs) in wanted {
        let recs = records
            .get(&universe)
            .ok_or_else(|| IngestError::MissingUniverse(universe.clone()))?;
        let mut cuts = Cuts::default();
        let by_attr: BTreeMap<String, Vec<f64>> = refs.iter().fold(BTreeMap::new(), |mut m, (a, p)| {
            m.entry(a.clone()).or_insert_with(Vec::new).push(f64::from_bits(*p));
            m
        });
        for (attr, pcts) in by_attr {
            let values: Vec<(f64, f64)> = recs
                .iter()
                .filter_map(|r| r.number(&attr).map(|x| (x, r.weight)))
                .collect();
            if values.is_empty() {
                return Err(IngestError::NoValues(attr));
            }
            let mut resolved = Vec::new();
            for pct in pcts {
                let value = weighted_quantile(&values, pct / 100.0);
                cuts.insert(&attr, pct, value);
                audit.push(AuditEntry::Threshold {
                    universe: universe.clone(),
                    attribute: attr.clone(),
                    pct,
                    value,
                });
                resolved.push(value);
            }
            if resolved.len() > 1 && resolved.windows(2).all(|w| w[0] == w[1]) {
                audit.push(AuditEntry::Warning(format!(
                    "attribute `{attr}` has a degenerate distribution: all percentile cuts equal {}",
                    resolved[0]
                )));
            }
        }
        out.insert(universe, cuts);
    }
    Ok(out)
}

/// Aggregates records into one column per catalog variable.
///
/// Units are every unit id seen in any record universe, in lexicographic
/// order. Each must have coordinates. Units with a zero denominator for any
/// variable are handled by `policy` and reported in the audit log.
pub fn build_area_table(
    records: &RecordSets,
    catalog: &VariableCatalog,
    rules: &AggregationRules,
    coordinates: &BTreeMap<String, [f64; 2]>,
    policy: MissingPolicy,
) -> Result<(AreaTable, AuditLog), IngestError> {
    let units: BTreeSet<&str> = records
        .values()
        .flat_map(|rs| rs.iter().map(|r| r.unit_id.as_str()))
        .collect();
    let missing: Vec<String> = units
        .iter()
        .filter(|u| !coordinates.contains_key(**u))
        .map(|u| (*u).to_owned())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::MissingCoordinates(missing));
    }
    let unit_ids: Vec<String> = units.iter().map(|u| (*u).to_owned()).collect();

    let mut audit = AuditLog::default();
    let cuts = resolve_cuts(records, catalog, rules, &mut audit)?;
    let no_cuts = Cuts::default();

    let mut values: Vec<Vec<Option<f64>>> = Vec::new();
    let mut population = BTreeMap::new();
    for var in catalog.variables() {
        let rule = rules.get(&var.name).expect("rules cover the catalog");
        let recs = records
            .get(rule.universe())
            .ok_or_else(|| IngestError::MissingUniverse(rule.universe().to_owned()))?;
        let cuts = cuts.get(rule.universe()).unwrap_or(&no_cuts);
        let per_unit = match rule {
            AggregationRule::Percentage {
                numerator,
                denominator,
                ..
            } => aggregate_percentage(recs, numerator, denominator, cuts),
            AggregationRule::WeightedMean {
                attribute, filter, ..
            } => aggregate_weighted_mean(recs, attribute, filter, cuts),
            AggregationRule::Ice {
                top, bottom, total, ..
            } => compute_ice(recs, top, bottom, total, cuts).map_err(|e| match e {
                IngestError::Config(m) => IngestError::Config(format!("`{}`: {m}", var.name)),
                other => other,
            })?,
        };
        let col: Vec<Option<f64>> = unit_ids
            .iter()
            .map(|u| per_unit.get(u).and_then(|a| a.value))
            .collect();
        for (u, v) in unit_ids.iter().zip(&col) {
            if v.is_none() {
                audit.push(AuditEntry::Missing {
                    unit: u.clone(),
                    variable: var.name.clone(),
                });
            }
        }
        population.insert(
            var.name.clone(),
            unit_ids
                .iter()
                .map(|u| per_unit.get(u).map_or(0.0, |a| a.denominator))
                .collect(),
        );
        values.push(col);
    }

    let n = unit_ids.len();
    let mut keep = vec![true; n];
    match policy {
        MissingPolicy::DropUnit => {
            for col in &values {
                for (k, v) in keep.iter_mut().zip(col) {
                    if v.is_none() {
                        *k = false;
                    }
                }
            }
            for (u, k) in unit_ids.iter().zip(&keep) {
                if !k {
                    audit.push(AuditEntry::Dropped { unit: u.clone() });
                }
            }
        }
        MissingPolicy::ImputeRegionMean => {
            for (var, col) in catalog.variables().zip(values.iter_mut()) {
                let present: Vec<f64> = col.iter().flatten().copied().collect();
                if present.is_empty() {
                    return Err(IngestError::NoValues(var.name.clone()));
                }
                let m = crate::stats::mean(&present);
                for (u, v) in unit_ids.iter().zip(col.iter_mut()) {
                    if v.is_none() {
                        *v = Some(m);
                        audit.push(AuditEntry::Imputed {
                            unit: u.clone(),
                            variable: var.name.clone(),
                            value: m,
                        });
                    }
                }
            }
        }
    }

    let columns = catalog
        .variables()
        .zip(&values)
        .map(|(var, col)| Column {
            name: var.name.clone(),
            values: col.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        })
        .collect();
    let coords = unit_ids.iter().map(|u| coordinates[u]).collect();
    let mut table = AreaTable::from_parts_unchecked(unit_ids, coords, columns).with_population(population);
    table.retain_units(&keep);
    if table.n_units() == 0 {
        return Err(IngestError::NoUnitsLeft);
    }
    table.check_invariants(catalog)?;
    Ok((table, audit))
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

    fn rules(c: &VariableCatalog) -> AggregationRules {
        AggregationRules::from_toml_str(
            r#"
            [variables.P_GRAD]
            universe = "persons"
            numerator = { attr = "grad", eq = 1 }
            [variables.MED_RENDDOM]
            universe = "households"
            mean_of = "income"
            [variables.ICE_renda]
            universe = "persons"
            top = { attr = "income", above_percentile = 80 }
            bottom = { attr = "income", at_or_below_percentile = 20 }
            "#,
            c,
        )
        .unwrap()
    }

    fn records() -> RecordSets {
        let mut persons = Vec::new();
        let mut households = Vec::new();
        for (u, base) in [("u1", 100.0), ("u2", 500.0), ("u3", 1500.0)] {
            for k in 0..5 {
                persons.push(
                    MicroRecord::new(u, 1.0 + k as f64)
                        .with_num("grad", (k % 2) as f64)
                        .with_num("income", base + 100.0 * k as f64),
                );
            }
            households.push(MicroRecord::new(u, 2.0).with_num("income", base * 3.0));
        }
        RecordSets::from([("persons".to_owned(), persons), ("households".to_owned(), households)])
    }

    fn coords() -> BTreeMap<String, [f64; 2]> {
        BTreeMap::from([
            ("u1".to_owned(), [0.0, 0.0]),
            ("u2".to_owned(), [1.0, 0.0]),
            ("u3".to_owned(), [2.0, 0.0]),
        ])
    }

    #[test]
    fn builds_one_column_per_variable() {
        let c = catalog();
        let (t, audit) = build_area_table(&records(), &c, &rules(&c), &coords(), MissingPolicy::DropUnit).unwrap();
        assert_eq!(t.n_units(), 3);
        assert_eq!(t.column_names(), vec!["P_GRAD", "MED_RENDDOM", "ICE_renda"]);
        // u1 weights 1..5, grad on k = 1, 3 -> (2 + 4) / 15
        assert!((t.column("P_GRAD").unwrap()[0] - 40.0).abs() < 1e-12);
        assert_eq!(t.column("MED_RENDDOM").unwrap()[2], 4500.0);
        assert!(audit.entries.iter().any(|e| matches!(e, AuditEntry::Threshold { .. })));
        // the poorest unit sits at the bottom of the ICE scale
        let ice = t.column("ICE_renda").unwrap();
        assert!(ice[0] < ice[1] && ice[1] < ice[2]);
    }

    #[test]
    fn missing_coordinates_are_listed() {
        let c = catalog();
        let mut coords = coords();
        coords.remove("u2");
        let err = build_area_table(&records(), &c, &rules(&c), &coords, MissingPolicy::DropUnit).unwrap_err();
        assert!(matches!(err, IngestError::MissingCoordinates(ref u) if u == &vec!["u2".to_owned()]));
    }

    #[test]
    fn zero_denominator_unit_is_dropped_and_audited() {
        let c = catalog();
        let mut recs = records();
        for r in recs.get_mut("persons").unwrap() {
            if r.unit_id == "u2" {
                r.attributes.remove("grad");
            }
        }
        let (t, audit) = build_area_table(&recs, &c, &rules(&c), &coords(), MissingPolicy::DropUnit).unwrap();
        assert_eq!(t.unit_ids(), &["u1".to_owned(), "u3".to_owned()]);
        assert_eq!(audit.dropped_units(), vec!["u2"]);

        let (t, audit) = build_area_table(&recs, &c, &rules(&c), &coords(), MissingPolicy::ImputeRegionMean).unwrap();
        assert_eq!(t.n_units(), 3);
        let g = t.column("P_GRAD").unwrap();
        assert!((g[1] - (g[0] + g[2]) / 2.0).abs() < 1e-12);
        assert!(audit.entries.iter().any(|e| matches!(e, AuditEntry::Imputed { .. })));
    }

    #[test]
    fn deterministic_export() {
        let c = catalog();
        let export = || {
            let (t, _) = build_area_table(&records(), &c, &rules(&c), &coords(), MissingPolicy::DropUnit).unwrap();
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(export(), export());
    }
}
