//! Writes a complete synthetic input set: aggregated table, microdata with
//! rules and coordinates, polygons, an adjacency list, an outcome, a
//! reference index and ready-to-run configs.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use geoses::ingest::{format_sig15, AttrValue};
use geoses::synth::{self, SyntheticRegion};
use geoses::VariableCatalog;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::to_geojson;

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub n_units: usize,
    pub seed: u64,
    /// Micro records per unit; `0` skips microdata.
    pub records_per_unit: usize,
    pub neighbor_count: usize,
    pub permutations: usize,
}

impl FixtureSpec {
    pub fn new(n_units: usize, seed: u64) -> Self {
        Self {
            n_units,
            seed,
            records_per_unit: 0,
            neighbor_count: 53.min(n_units),
            permutations: 999,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub dir: PathBuf,
    pub area_table: PathBuf,
    pub coordinates: PathBuf,
    pub geometry: PathBuf,
    pub adjacency: PathBuf,
    pub outcome: PathBuf,
    pub reference: PathBuf,
    /// Runs from the aggregated table.
    pub config: PathBuf,
    /// Present when microdata were written.
    pub microdata: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub microdata_config: Option<PathBuf>,
}

fn unit_column(ids: &[String], name: &str, values: &[f64]) -> String {
    let mut s = format!("unit_id,{name}\n");
    for (id, v) in ids.iter().zip(values) {
        let _ = writeln!(s, "{id},{}", format_sig15(*v));
    }
    s
}

fn adjacency_text(region: &SyntheticRegion) -> Result<String> {
    let (w, _) = geoses::spatial::queen_contiguity(
        &region.unit_ids,
        &region.geometries,
        geoses::spatial::DEFAULT_QUANTUM,
    )?;
    let mut s = String::from("# queen contiguity\n");
    for (i, id) in region.unit_ids.iter().enumerate() {
        let nb: Vec<&str> = w.neighbors(i).iter().map(|&j| region.unit_ids[j].as_str()).collect();
        let _ = writeln!(s, "{id}: {}", nb.join(" "));
    }
    Ok(s)
}

fn microdata_csv(records: &[geoses::MicroRecord]) -> String {
    let attrs: BTreeSet<&str> = records.iter().flat_map(|r| r.attributes.keys().map(String::as_str)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["unit_id", "weight"];
    header.extend(attrs.iter().copied());
    w.write_record(&header).expect("in-memory write");
    for r in records {
        let mut row = vec![r.unit_id.clone(), format_sig15(r.weight)];
        row.extend(attrs.iter().map(|a| match r.get(a) {
            Some(AttrValue::Number(v)) => format_sig15(*v),
            Some(AttrValue::Text(t)) => t.clone(),
            None => String::new(),
        }));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn config_text(spec: &FixtureSpec, inputs: &str, output: &str) -> String {
    format!(
        "scale = \"national\"\noutput_dir = \"{output}\"\n\n[inputs]\n{inputs}outcome = \"outcome.csv\"\n\
         geometry = \"geometry.geojson\"\nreference = \"reference.csv\"\n\n[spatial]\nneighbor_count = {}\n\
         permutations = {}\nseed = {}\n",
        spec.neighbor_count, spec.permutations, spec.seed
    )
}

/// Writes the fixture into `dir` (created if needed).
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<FixturePaths> {
    std::fs::create_dir_all(dir)?;
    let catalog = VariableCatalog::default_catalog();
    let region = synth::region(spec.n_units, spec.seed);
    let ids = &region.unit_ids;
    let p = |name: &str| dir.join(name);

    let table = synth::area_table(&catalog, &region, spec.seed);
    crate::exports::write_area_table(&p("area_table.csv"), &table)?;

    let mut coords = String::from("unit_id,x,y\n");
    for (id, c) in ids.iter().zip(&region.coordinates) {
        let _ = writeln!(coords, "{id},{},{}", format_sig15(c[0]), format_sig15(c[1]));
    }
    std::fs::write(p("coordinates.csv"), coords)?;
    std::fs::write(p("geometry.geojson"), to_geojson(ids, &region.geometries, "unit_id", &[]))?;
    std::fs::write(p("adjacency.txt"), adjacency_text(&region)?)?;
    std::fs::write(p("outcome.csv"), unit_column(ids, "relative_risk", &synth::outcome(&region, spec.seed)))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
    let reference: Vec<f64> = region
        .latent
        .iter()
        .map(|s| 0.7 + 0.08 * s + 0.02 * rng.gen_range(-1.0..1.0))
        .collect();
    std::fs::write(p("reference.csv"), unit_column(ids, "reference_index", &reference))?;

    std::fs::write(p("config.toml"), config_text(spec, "area_table = \"area_table.csv\"\n", "out"))?;

    let (mut microdata, mut rules, mut microdata_config) = (None, None, None);
    if spec.records_per_unit > 0 {
        let records = synth::microdata(&catalog, &region, spec.records_per_unit, spec.seed);
        std::fs::write(p("microdata.csv"), microdata_csv(&records[synth::UNIVERSE]))?;
        std::fs::write(p("rules.toml"), synth::rules_toml(&catalog))?;
        let inputs = format!(
            "rules = \"rules.toml\"\ncoordinates = \"coordinates.csv\"\nmicrodata = {{ {} = \"microdata.csv\" }}\n",
            synth::UNIVERSE
        );
        std::fs::write(p("config_microdata.toml"), config_text(spec, &inputs, "out_microdata"))?;
        microdata = Some(p("microdata.csv"));
        rules = Some(p("rules.toml"));
        microdata_config = Some(p("config_microdata.toml"));
    }

    Ok(FixturePaths {
        dir: dir.to_path_buf(),
        area_table: p("area_table.csv"),
        coordinates: p("coordinates.csv"),
        geometry: p("geometry.geojson"),
        adjacency: p("adjacency.txt"),
        outcome: p("outcome.csv"),
        reference: p("reference.csv"),
        config: p("config.toml"),
        microdata,
        rules,
        microdata_config,
    })
}
