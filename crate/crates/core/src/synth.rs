//! Seeded synthetic inputs.
//!
//! Units sit on a square grid. A spatially smooth latent factor drives every
//! catalog variable with a dimension-specific strength; mobility is nearly
//! independent of it, so it drops out of the index. The same field drives
//! a relative-risk outcome whose slope varies across the grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::catalog::{Polarity, VariableCatalog, VariableDef, VariableKind};
use crate::ingest::{AreaTable, AttrValue, Column, MicroRecord, RecordSets};
use crate::spatial::{grid_polygons, UnitGeometry};
use crate::stats;

/// Universe name used by the synthetic microdata and rules.
pub const UNIVERSE: &str = "persons";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRegion {
    pub unit_ids: Vec<String>,
    /// Cell centers.
    pub coordinates: Vec<[f64; 2]>,
    pub geometries: Vec<UnitGeometry>,
    /// Standardized latent factor per unit.
    pub latent: Vec<f64>,
    pub grid_cols: usize,
}

impl SyntheticRegion {
    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn coordinate_map(&self) -> BTreeMap<String, [f64; 2]> {
        self.unit_ids.iter().cloned().zip(self.coordinates.iter().copied()).collect()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// `n_units` grid cells, filled row by row on a grid `ceil(sqrt(n))` wide.
/// Ids are zero-padded so lexicographic and grid order agree.
pub fn region(n_units: usize, seed: u64) -> SyntheticRegion {
    let cols = (n_units as f64).sqrt().ceil().max(1.0) as usize;
    let rows = n_units.div_ceil(cols);
    let width = n_units.max(1).to_string().len().max(4);
    let mut geometries = grid_polygons(cols, rows);
    geometries.truncate(n_units);
    let coordinates: Vec<[f64; 2]> = (0..n_units)
        .map(|i| [(i % cols) as f64 + 0.5, (i / cols) as f64 + 0.5])
        .collect();
    let mut rng = rng_for(seed, 0);
    let (fx, fy, fd) = (rng.gen_range(0.25..0.45), rng.gen_range(0.2..0.4), rng.gen_range(0.12..0.25));
    let raw: Vec<f64> = coordinates
        .iter()
        .map(|&[x, y]| (fx * x).sin() + (fy * y).cos() + 0.5 * (fd * (x + y)).sin() + 0.35 * normal(&mut rng))
        .collect();
    let (m, sd) = (stats::mean(&raw), stats::std_dev(&raw));
    let latent = raw
        .iter()
        .map(|v| if sd > 0.0 { (v - m) / sd } else { 0.0 })
        .collect();
    SyntheticRegion {
        unit_ids: (0..n_units).map(|i| format!("U{i:0width$}")).collect(),
        coordinates,
        geometries,
        latent,
        grid_cols: cols,
    }
}

/// Signed strength of the latent factor in a variable.
pub fn variable_loading(var: &VariableDef) -> f64 {
    let strength = match var.dimension.as_str() {
        "education" => 0.93,
        "mobility" => 0.06,
        "poverty" => 0.94,
        "wealth" => 0.9,
        "income" => 0.97,
        "segregation" => 0.88,
        "deprivation" => 0.9,
        _ => 0.8,
    };
    match var.polarity_hint {
        Polarity::Favorable => strength,
        Polarity::Unfavorable => -strength,
        Polarity::Neutral if var.dimension == "mobility" => strength,
        Polarity::Neutral => 0.6 * strength,
    }
}

/// Unit-level propensity for each variable: `loading * latent + noise` with
/// unit variance.
fn propensities(catalog: &VariableCatalog, region: &SyntheticRegion, seed: u64) -> Vec<(f64, Vec<f64>)> {
    catalog
        .variables()
        .enumerate()
        .map(|(j, var)| {
            let mut rng = rng_for(seed, 1 + j as u64);
            let l = variable_loading(var);
            let base = rng.gen_range(-1.5..1.5);
            let e = region
                .latent
                .iter()
                .map(|s| l * s + (1.0 - l * l).sqrt() * normal(&mut rng))
                .collect();
            (base, e)
        })
        .collect()
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn area_value(var: &VariableDef, base: f64, e: f64) -> f64 {
    match var.kind {
        VariableKind::Percentage => 100.0 * logistic(base + 1.2 * e),
        VariableKind::IceRatio => (0.6 * e + 0.2 * base).tanh(),
        VariableKind::WeightedMean if var.name == "MEDIA_DENSMORA" => 2.5 * (0.15 * e).exp(),
        VariableKind::WeightedMean => 1500.0 * (0.6 * e).exp(),
    }
}

/// Area table with one column per catalog variable.
pub fn area_table(catalog: &VariableCatalog, region: &SyntheticRegion, seed: u64) -> AreaTable {
    let columns = catalog
        .variables()
        .zip(propensities(catalog, region, seed))
        .map(|(var, (base, e))| Column {
            name: var.name.clone(),
            values: e.iter().map(|&v| area_value(var, base, v)).collect(),
        })
        .collect();
    AreaTable::new(region.unit_ids.clone(), region.coordinates.clone(), columns)
        .expect("synthetic table is well formed")
}

/// Relative risk decreasing with the latent factor, with a slope that
/// varies from west to east so local models fit better than a global one.
pub fn outcome(region: &SyntheticRegion, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, 1 << 32);
    let width = region.grid_cols as f64;
    region
        .latent
        .iter()
        .zip(&region.coordinates)
        .map(|(s, c)| {
            let slope = 0.25 * (1.0 + 0.8 * (std::f64::consts::TAU * c[0] / width).sin());
            1.0 - slope * s + 0.03 * normal(&mut rng)
        })
        .collect()
}

const RACES: [&str; 5] = ["branco", "preto", "pardo", "indigena", "amarelo"];

/// Person records: one 0/1 flag per percentage variable, `income`,
/// `density` (dwellers per bedroom), `race` and `educ` (level 0 to 4).
pub fn microdata(catalog: &VariableCatalog, region: &SyntheticRegion, records_per_unit: usize, seed: u64) -> RecordSets {
    let props = propensities(catalog, region, seed);
    let vars: Vec<&VariableDef> = catalog.variables().collect();
    let income_e = vars
        .iter()
        .position(|v| v.name == "MED_RENDDOM")
        .map(|j| props[j].1.clone())
        .unwrap_or_else(|| region.latent.clone());
    let mut records = Vec::with_capacity(region.n_units() * records_per_unit);
    for (u, id) in region.unit_ids.iter().enumerate() {
        let mut rng = rng_for(seed, (2 << 32) + u as u64);
        let s = region.latent[u];
        for _ in 0..records_per_unit {
            let mut r = MicroRecord::new(id.clone(), rng.gen_range(5.0..25.0))
                .with_num("income", 1500.0 * (0.6 * income_e[u] + 0.5 * normal(&mut rng)).exp())
                .with_num("educ", (2.0 + 1.2 * s + normal(&mut rng)).round().clamp(0.0, 4.0));
            let race = if rng.gen_bool(logistic(0.8 * s)) {
                "branco"
            } else {
                RACES[rng.gen_range(1..RACES.len())]
            };
            r = r.with("race", AttrValue::Text(race.to_owned()));
            for (var, (base, e)) in vars.iter().zip(&props) {
                match var.kind {
                    VariableKind::Percentage => {
                        let p = logistic(base + 1.2 * e[u]);
                        r = r.with_num(var.name.clone(), f64::from(u8::from(rng.gen_bool(p))));
                    }
                    VariableKind::WeightedMean if var.name != "MED_RENDDOM" => {
                        let v = area_value(var, *base, e[u]) * (0.1 * normal(&mut rng)).exp();
                        r = r.with_num(var.name.clone(), v);
                    }
                    _ => {}
                }
            }
            records.push(r);
        }
    }
    BTreeMap::from([(UNIVERSE.to_owned(), records)])
}

/// Aggregation rules for [`microdata`] covering every catalog variable.
pub fn rules_toml(catalog: &VariableCatalog) -> String {
    let mut out = String::new();
    let top = r#"{ attr = "income", above_percentile = 80 }"#;
    let bottom = r#"{ attr = "income", at_or_below_percentile = 20 }"#;
    let with_race = |race: &str, side: &str| format!(r#"{{ all = [{{ attr = "race", {race} }}, {side}] }}"#);
    for var in catalog.variables() {
        let _ = writeln!(out, "[variables.{}]\nuniverse = \"{UNIVERSE}\"", var.name);
        let _ = match var.kind {
            VariableKind::Percentage => writeln!(out, "numerator = {{ attr = \"{}\", eq = 1 }}", var.name),
            VariableKind::WeightedMean if var.name == "MED_RENDDOM" => writeln!(out, "mean_of = \"income\""),
            VariableKind::WeightedMean => writeln!(out, "mean_of = \"{}\"", var.name),
            VariableKind::IceRatio => {
                let (t, b) = match var.name.as_str() {
                    "ICEedu" => (
                        r#"{ attr = "educ", ge = 4 }"#.to_owned(),
                        r#"{ attr = "educ", le = 0 }"#.to_owned(),
                    ),
                    "ICE_renda_preto" => (with_race("eq = \"branco\"", top), with_race("eq = \"preto\"", bottom)),
                    "ICE_renda_ppi" => (
                        with_race("eq = \"branco\"", top),
                        with_race(r#"one_of = ["preto", "pardo", "indigena"]"#, bottom),
                    ),
                    "ICE_branco_renda" => (with_race("eq = \"branco\"", top), with_race("eq = \"branco\"", bottom)),
                    _ => (top.to_owned(), bottom.to_owned()),
                };
                writeln!(out, "top = {t}\nbottom = {b}")
            }
        };
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_area_table, AggregationRules, MissingPolicy};

    #[test]
    fn region_is_deterministic_and_standardized() {
        let a = region(50, 3);
        assert_eq!(a, region(50, 3));
        assert_ne!(a.latent, region(50, 4).latent);
        assert!(stats::mean(&a.latent).abs() < 1e-12);
        assert!((stats::std_dev(&a.latent) - 1.0).abs() < 1e-12);
        assert_eq!(a.unit_ids[0], "U0000");
        assert_eq!(a.geometries.len(), 50);
    }

    #[test]
    fn table_respects_kind_ranges() {
        let c = VariableCatalog::default_catalog();
        let t = area_table(&c, &region(80, 1), 1);
        t.check_invariants(&c).unwrap();
        assert_eq!(t.columns().len(), 46);
    }

    #[test]
    fn microdata_aggregates_under_generated_rules() {
        let c = VariableCatalog::default_catalog();
        let reg = region(12, 9);
        let recs = microdata(&c, &reg, 40, 9);
        let rules = AggregationRules::from_toml_str(&rules_toml(&c), &c).unwrap();
        let (t, _) = build_area_table(&recs, &c, &rules, &reg.coordinate_map(), MissingPolicy::DropUnit).unwrap();
        assert_eq!(t.unit_ids(), reg.unit_ids.as_slice());
        t.check_invariants(&c).unwrap();
    }
}
