//! Subcommand implementations. Each reads a [`RunConfig`], writes its
//! artifacts into the output directory and returns what it produced.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use geoses::index::{self, build_index, IndexResult, ReferenceTable};
use geoses::ingest::{self, build_area_table, read_coordinates, read_records, AggregationRules, AreaTable, Column};
use geoses::spatial::{compare_models, gwr_fit, ols_simple, SpatialError, SpatialFit};
use geoses::VariableCatalog;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, ErrorKind, Result};
use crate::exports::{self, FitSummary, IndexExport, ValidationRow, INDEX_COLUMN};
use crate::geometry::{to_geojson, GeometrySource};
use crate::html::{self, MapInput};
use crate::manifest::RunManifest;

pub const BUILD_MANIFEST: &str = "manifest.json";
pub const VALIDATE_MANIFEST: &str = "manifest_validate.json";
pub const RENDER_MANIFEST: &str = "manifest_render.json";
pub const MAP_FILE: &str = "map.html";
pub const GEOJSON_FILE: &str = "index.geojson";

fn warn(w: &str) {
    eprintln!("warning: {w}");
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("output directory `{}`: {e}", dir.display())))
}

pub fn load_catalog(cfg: &RunConfig) -> Result<VariableCatalog> {
    match &cfg.catalog {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            Ok(VariableCatalog::from_toml_str(&text)?)
        }
        None => Ok(VariableCatalog::default_catalog()),
    }
}

/// Indicator label used in validation tables.
pub fn indicator_name(layer: &str) -> String {
    if layer == INDEX_COLUMN {
        INDEX_COLUMN.to_owned()
    } else {
        format!("{INDEX_COLUMN}-{layer}")
    }
}

/// Aggregated table from either a pre-aggregated file or microdata.
fn load_table(
    cfg: &RunConfig,
    catalog: &VariableCatalog,
    manifest: &mut RunManifest,
) -> Result<(AreaTable, Option<ingest::AuditLog>)> {
    let delim = cfg.delimiter()?;
    let inputs = &cfg.inputs;
    if let Some(path) = &inputs.area_table {
        manifest.add_input("area_table", path)?;
        let table = AreaTable::read_csv(open(path)?, delim).map_err(|e| CliError::from(e).context(path.display()))?;
        table.check_invariants(catalog)?;
        return Ok((table, None));
    }
    if inputs.microdata.is_empty() {
        return Err(CliError::usage("no input: set inputs.area_table or inputs.microdata"));
    }
    let rules_path = inputs
        .rules
        .as_ref()
        .ok_or_else(|| CliError::usage("microdata input needs inputs.rules"))?;
    let coords_path = inputs
        .coordinates
        .as_ref()
        .ok_or_else(|| CliError::usage("microdata input needs inputs.coordinates"))?;
    let format = cfg.record_format()?;
    let mut records = BTreeMap::new();
    for (universe, path) in &inputs.microdata {
        manifest.add_input(&format!("microdata:{universe}"), path)?;
        let rs = read_records(open(path)?, &format).map_err(|e| CliError::from(e).context(path.display()))?;
        records.insert(universe.clone(), rs);
    }
    manifest.add_input("rules", rules_path)?;
    let rules_src = std::fs::read_to_string(rules_path)?;
    let rules = AggregationRules::from_toml_str(&rules_src, catalog)
        .map_err(|e| CliError::from(e).context(rules_path.display()))?;
    manifest.add_input("coordinates", coords_path)?;
    let coords = read_coordinates(open(coords_path)?, delim).map_err(|e| CliError::from(e).context(coords_path.display()))?;
    let (table, audit) = build_area_table(&records, catalog, &rules, &coords, cfg.missing_policy()?)?;
    Ok((table, Some(audit)))
}

fn read_reference(path: &Path, delimiter: u8) -> Result<ReferenceTable> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let iu = headers
        .iter()
        .position(|h| h == "unit_id")
        .ok_or_else(|| CliError::input(format!("{}: no `unit_id` column", path.display())))?;
    let cols: Vec<usize> = (0..headers.len()).filter(|&i| i != iu).collect();
    let mut unit_ids = Vec::new();
    let mut values = vec![Vec::new(); cols.len()];
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        unit_ids.push(row.get(iu).unwrap_or("").trim().to_owned());
        for (k, &i) in cols.iter().enumerate() {
            let cell = row.get(i).unwrap_or("").trim();
            values[k].push(cell.parse::<f64>().map_err(|_| {
                CliError::input(format!("{} line {}: `{cell}` is not a number", path.display(), line + 2))
            })?);
        }
    }
    Ok(ReferenceTable {
        unit_ids,
        columns: cols
            .iter()
            .zip(values)
            .map(|(&i, values)| Column {
                name: headers[i].to_owned(),
                values,
            })
            .collect(),
    })
}

fn index_summary(r: &IndexResult) -> serde_json::Value {
    json!({
        "units": r.unit_ids.len(),
        "orientation_variable": r.orientation_variable,
        "orientation_correlation": r.stage3.orientation_correlation,
        "flipped": r.stage3.flipped,
        "stage1": r.stage1.iter().map(|d| json!({
            "dimension": d.dimension,
            "retained_components": d.retained_components,
            "selected": d.selected,
        })).collect::<Vec<_>>(),
        "stage2_selected": r.stage2.selected,
        "stage2_fallback": r.stage2.fallback,
        "final_explained_fraction": r.stage3.explained_fraction.first(),
        "cronbach_alpha": r.cronbach_alpha,
        "active_dimensions": r.active_dimensions(),
        "inactive_dimensions": r.inactive_dimensions(),
    })
}

#[derive(Debug)]
pub struct BuildOutput {
    pub output_dir: PathBuf,
    pub result: IndexResult,
    pub manifest: RunManifest,
}

/// Ingest (or load) the table, run the pipeline and write the exports.
pub fn cmd_build_index(cfg: &RunConfig) -> Result<BuildOutput> {
    cfg.check_paths_exist()?;
    let catalog = load_catalog(cfg)?;
    let mut manifest = RunManifest::start("build-index", cfg, catalog.content_hash());
    if let Some(p) = &cfg.catalog {
        manifest.add_input("catalog", p)?;
    }
    let (table, audit) = load_table(cfg, &catalog, &mut manifest)?;
    if let Some(a) = &audit {
        let dropped = a.dropped_units();
        manifest.stage("ingest", json!({ "units": table.n_units(), "dropped": dropped }));
        for e in &a.entries {
            if let ingest::AuditEntry::Warning(w) = e {
                manifest.warnings.push(w.clone());
            }
        }
    } else {
        manifest.stage("ingest", json!({ "units": table.n_units(), "source": "area_table" }));
    }

    let result = build_index(&table, &catalog, &cfg.pipeline_config())?;
    manifest.stage("index", index_summary(&result));
    manifest.warnings.extend(result.warnings.iter().cloned());

    let dir = cfg.output_dir();
    create_dir(&dir)?;
    exports::write_index(&dir.join(exports::INDEX_FILE), &result)?;
    manifest.add_output("index", &dir, exports::INDEX_FILE)?;
    exports::write_area_table(&dir.join(exports::AREA_TABLE_FILE), &table)?;
    manifest.add_output("area_table", &dir, exports::AREA_TABLE_FILE)?;
    exports::write_selection(&dir.join(exports::SELECTION_FILE), &result)?;
    manifest.add_output("selection", &dir, exports::SELECTION_FILE)?;
    exports::write_representatives(&dir, &result)?;
    manifest.add_output("representatives", &dir, exports::REPRESENTATIVES_FILE)?;
    manifest.add_output("representatives_raw", &dir, exports::REPRESENTATIVES_RAW_FILE)?;
    if let Some(a) = &audit {
        exports::write_audit(&dir.join(exports::AUDIT_FILE), a)?;
        manifest.add_output("audit", &dir, exports::AUDIT_FILE)?;
    }
    if let Some(p) = &cfg.inputs.reference {
        manifest.add_input("reference", p)?;
        let reference = read_reference(p, cfg.delimiter()?)?;
        let m = index::compare_with_reference(&result, &reference)?;
        exports::write_correlation(&dir.join(exports::CORRELATION_FILE), &m)?;
        manifest.add_output("correlation", &dir, exports::CORRELATION_FILE)?;
    }
    for w in &manifest.warnings {
        warn(w);
    }
    let manifest = manifest.finish(&dir, BUILD_MANIFEST)?;
    Ok(BuildOutput {
        output_dir: dir,
        result,
        manifest,
    })
}

fn index_path(cfg: &RunConfig) -> PathBuf {
    cfg.inputs
        .index
        .clone()
        .unwrap_or_else(|| cfg.output_dir().join(exports::INDEX_FILE))
}

fn load_export(cfg: &RunConfig, manifest: &mut RunManifest) -> Result<IndexExport> {
    let p = index_path(cfg);
    if !p.exists() {
        return Err(CliError::usage(format!(
            "index export `{}` not found; run build-index first or set inputs.index",
            p.display()
        )));
    }
    manifest.add_input("index", &p)?;
    IndexExport::read(&p)
}

fn load_geometry(cfg: &RunConfig, manifest: &mut RunManifest) -> Result<GeometrySource> {
    let p = cfg
        .inputs
        .geometry
        .as_ref()
        .ok_or_else(|| CliError::usage("inputs.geometry is required"))?;
    manifest.add_input("geometry", p)?;
    GeometrySource::load(p, cfg.id_property())
}

/// `missing` are index units absent from `other`; `unexpected` the reverse.
fn unit_diff<'a>(index: &'a [String], other: impl Iterator<Item = &'a String> + Clone) -> (Vec<String>, Vec<String>) {
    let known: std::collections::HashSet<&str> = index.iter().map(String::as_str).collect();
    let theirs: std::collections::HashSet<&str> = other.clone().map(String::as_str).collect();
    let mut missing: Vec<String> = index.iter().filter(|u| !theirs.contains(u.as_str())).cloned().collect();
    let mut unexpected: Vec<String> = other.filter(|u| !known.contains(u.as_str())).cloned().collect();
    missing.sort();
    unexpected.sort();
    (missing, unexpected)
}

fn mismatch_error(what: &str, missing: &[String], unexpected: &[String]) -> CliError {
    let mut msg = format!("unit mismatch between index and {what}");
    if !missing.is_empty() {
        msg.push_str(&format!("; missing from {what}: {}", missing.join(", ")));
    }
    if !unexpected.is_empty() {
        msg.push_str(&format!("; not in index: {}", unexpected.join(", ")));
    }
    CliError::data(msg)
}

fn coordinates_for(cfg: &RunConfig, geometry: &GeometrySource, units: &[String], manifest: &mut RunManifest) -> Result<Vec<[f64; 2]>> {
    let map: HashMap<String, [f64; 2]> = match &cfg.inputs.coordinates {
        Some(p) => {
            manifest.add_input("coordinates", p)?;
            read_coordinates(open(p)?, cfg.delimiter()?)
                .map_err(|e| CliError::from(e).context(p.display()))?
                .into_iter()
                .collect()
        }
        None => geometry.centroids().ok_or_else(|| {
            CliError::usage("adjacency geometry has no coordinates; set inputs.coordinates")
        })?,
    };
    let missing: Vec<&str> = units
        .iter()
        .filter(|u| !map.contains_key(*u))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::data(format!("units without coordinates: {}", missing.join(", "))));
    }
    Ok(units.iter().map(|u| map[u]).collect())
}

fn summarize(f: &SpatialFit) -> FitSummary {
    FitSummary {
        adjusted_r2: f.r2_global_adjusted,
        aicc: f.aicc,
        moran_i: f.moran_i,
        moran_p: f.moran_p,
    }
}

/// Table rows in indicator order; `best` and `dependence` come from
/// ranking the fitted models.
fn table_rows(names: &[String], fits: &[Option<SpatialFit>]) -> Result<Vec<ValidationRow>> {
    let fitted: Vec<(String, &SpatialFit)> = names
        .iter()
        .zip(fits)
        .filter_map(|(n, f)| f.as_ref().map(|f| (n.clone(), f)))
        .collect();
    let ranked = compare_models(&fitted)?;
    Ok(names
        .iter()
        .zip(fits)
        .map(|(n, f)| {
            let r = ranked.iter().find(|r| &r.indicator == n);
            ValidationRow {
                indicator: n.clone(),
                fit: f.as_ref().map(summarize),
                best: r.is_some_and(|r| r.best && !r.aicc.is_nan()),
                dependence: r.is_some_and(|r| r.dependence),
            }
        })
        .collect())
}

#[derive(Debug)]
pub struct ValidateOutput {
    pub gwr: Vec<ValidationRow>,
    pub ols: Vec<ValidationRow>,
    pub warnings: Vec<String>,
    pub manifest: RunManifest,
}

/// Fits OLS and GWR of the outcome on the index and each active dimension
/// and writes the comparison tables.
pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidateOutput> {
    cfg.check_paths_exist()?;
    let moran_cfg = cfg.moran_config()?;
    let gwr_cfg = cfg.gwr_config()?;
    let catalog = load_catalog(cfg)?;
    let mut manifest = RunManifest::start("validate", cfg, catalog.content_hash());
    let export = load_export(cfg, &mut manifest)?;
    let units = &export.unit_ids;

    let outcome_path = cfg
        .inputs
        .outcome
        .as_ref()
        .ok_or_else(|| CliError::usage("inputs.outcome is required"))?;
    manifest.add_input("outcome", outcome_path)?;
    let outcome = exports::read_unit_values(outcome_path, cfg.delimiter()?, None)?;
    let (missing, unexpected) = unit_diff(units, outcome.keys());
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(mismatch_error("outcome", &missing, &unexpected));
    }
    let y: Vec<f64> = units.iter().map(|u| outcome[u]).collect();

    let geometry = load_geometry(cfg, &mut manifest)?;
    let (missing, _) = unit_diff(units, geometry.unit_ids().iter());
    if !missing.is_empty() {
        return Err(mismatch_error("geometry", &missing, &[]));
    }
    let (weights, isolated) = geometry.weights_for(units, cfg.spatial.quantum)?;
    let mut warnings = Vec::new();
    if !isolated.is_empty() {
        warnings.push(format!("units without neighbors: {}", isolated.join(", ")));
    }
    let coords = coordinates_for(cfg, &geometry, units, &mut manifest)?;

    let names: Vec<String> = export.layers.iter().map(|l| indicator_name(l)).collect();
    let mut gwr_fits = Vec::with_capacity(names.len());
    let mut ols_fits = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let x = &export.values[k];
        let mut ols = ols_simple(&y, x).map_err(|e| CliError::from(e).context(name))?;
        ols.attach_moran(&weights, &moran_cfg)?;
        warnings.extend(ols.warnings.iter().map(|w| format!("{name} OLS: {w}")));
        ols_fits.push(Some(ols));
        match gwr_fit(&y, x, &coords, &gwr_cfg) {
            Ok(mut g) => {
                g.attach_moran(&weights, &moran_cfg)?;
                warnings.extend(g.warnings.iter().map(|w| format!("{name} GWR: {w}")));
                gwr_fits.push(Some(g));
            }
            Err(e @ (SpatialError::SingularLocalDesign { .. } | SpatialError::TooFlexible { .. })) => {
                warnings.push(format!("{name} GWR not fitted: {e}"));
                gwr_fits.push(None);
            }
            Err(e) => return Err(CliError::from(e).context(name)),
        }
    }
    let gwr = table_rows(&names, &gwr_fits)?;
    let ols = table_rows(&names, &ols_fits)?;

    let dir = cfg.output_dir();
    create_dir(&dir)?;
    exports::write_validation(&dir.join(exports::VALIDATION_FILE), &gwr)?;
    manifest.add_output("validation", &dir, exports::VALIDATION_FILE)?;
    exports::write_validation(&dir.join(exports::VALIDATION_OLS_FILE), &ols)?;
    manifest.add_output("validation_ols", &dir, exports::VALIDATION_OLS_FILE)?;
    if let Some(g) = &gwr_fits[0] {
        exports::write_local(&dir.join(exports::LOCAL_FILE), units, g)?;
        manifest.add_output("local_coefficients", &dir, exports::LOCAL_FILE)?;
    }
    manifest.stage(
        "validate",
        json!({
            "units": units.len(),
            "neighbor_count": gwr_cfg.neighbor_count,
            "kernel": gwr_cfg.kernel.to_string(),
            "permutations": moran_cfg.permutations,
            "seed": moran_cfg.seed,
            "alternative": moran_cfg.alternative.to_string(),
            "isolated": isolated,
            "best_gwr": gwr.iter().find(|r| r.best).map(|r| &r.indicator),
            "best_ols": ols.iter().find(|r| r.best).map(|r| &r.indicator),
        }),
    );
    manifest.warnings.extend(warnings.iter().cloned());
    for w in &warnings {
        warn(w);
    }
    let manifest = manifest.finish(&dir, VALIDATE_MANIFEST)?;
    Ok(ValidateOutput {
        gwr,
        ols,
        warnings,
        manifest,
    })
}

#[derive(Debug)]
pub struct RenderOutput {
    pub html_path: PathBuf,
    pub warnings: Vec<String>,
}

/// Writes the standalone HTML map and a GeoJSON copy of the index.
pub fn cmd_render_map(cfg: &RunConfig, html_path: Option<&Path>) -> Result<RenderOutput> {
    cfg.check_paths_exist()?;
    let palette = cfg.palette()?;
    let catalog = load_catalog(cfg)?;
    let mut manifest = RunManifest::start("render-map", cfg, catalog.content_hash());
    let export = load_export(cfg, &mut manifest)?;
    let geometry = load_geometry(cfg, &mut manifest)?;
    let (ids, shapes) = geometry
        .shapes()
        .ok_or_else(|| CliError::usage("render-map needs polygon geometry (GeoJSON), not an adjacency list"))?;

    let out = html::render(&MapInput {
        title: &cfg.report.title,
        palette: &palette,
        export: &export,
        geometry_ids: ids,
        shapes,
    });
    let dir = cfg.output_dir();
    create_dir(&dir)?;
    let html_path = html_path.map_or_else(|| dir.join(MAP_FILE), Path::to_path_buf);
    if let Some(parent) = html_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(&html_path, &out.html)?;
    manifest.outputs.push(crate::manifest::FileHash {
        role: "map".into(),
        path: html_path.display().to_string(),
        sha256: crate::manifest::sha256_hex(out.html.as_bytes()),
    });

    let pos: HashMap<&str, usize> = export.unit_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let keep: Vec<usize> = (0..ids.len()).filter(|&g| pos.contains_key(ids[g].as_str())).collect();
    let gj_ids: Vec<String> = keep.iter().map(|&g| ids[g].clone()).collect();
    let gj_shapes: Vec<_> = keep.iter().map(|&g| shapes[g].clone()).collect();
    let props: Vec<(String, Vec<f64>)> = export
        .layers
        .iter()
        .zip(&export.values)
        .map(|(l, v)| (l.clone(), gj_ids.iter().map(|u| v[pos[u.as_str()]]).collect()))
        .collect();
    std::fs::write(dir.join(GEOJSON_FILE), to_geojson(&gj_ids, &gj_shapes, cfg.id_property(), &props))?;
    manifest.add_output("geojson", &dir, GEOJSON_FILE)?;

    manifest.stage(
        "render",
        json!({ "layers": export.layers, "features": keep.len(), "palette": palette }),
    );
    manifest.warnings.extend(out.warnings.iter().cloned());
    for w in &out.warnings {
        warn(w);
    }
    manifest.finish(&dir, RENDER_MANIFEST)?;
    Ok(RenderOutput {
        html_path,
        warnings: out.warnings,
    })
}

/// Full pipeline internals as JSON: eigenvalues, loadings and selections
/// per stage, plus weights statistics when geometry is configured.
pub fn cmd_dump_diagnostics(cfg: &RunConfig) -> Result<serde_json::Value> {
    cfg.check_paths_exist()?;
    let catalog = load_catalog(cfg)?;
    let mut scratch = RunManifest::start("dump-diagnostics", cfg, catalog.content_hash());
    let (table, audit) = load_table(cfg, &catalog, &mut scratch)?;
    let r = build_index(&table, &catalog, &cfg.pipeline_config())?;
    let mut out = json!({
        "catalog_hash": catalog.content_hash(),
        "units": table.n_units(),
        "stage1": r.stage1.iter().map(|d| json!({
            "dimension": d.dimension,
            "candidates": d.candidates,
            "eigenvalues": d.eigenvalues,
            "explained_fraction": d.explained_fraction,
            "retained_components": d.retained_components,
            "loadings": (0..d.candidates.len()).map(|i| d.loadings.row(i).to_vec()).collect::<Vec<_>>(),
            "selected": d.selected,
        })).collect::<Vec<_>>(),
        "stage2": {
            "candidates": r.stage2.candidates,
            "eigenvalues": r.stage2.eigenvalues,
            "first_loadings": r.stage2.first_loadings,
            "mean_abs_loading": r.stage2.mean_abs_loading,
            "selected": r.stage2.selected,
            "fallback": r.stage2.fallback,
        },
        "stage3": {
            "variables": r.stage3.variables,
            "eigenvalues": r.stage3.eigenvalues,
            "explained_fraction": r.stage3.explained_fraction,
            "loadings": r.stage3.loadings,
            "orientation_variable": r.orientation_variable,
            "orientation_correlation": r.stage3.orientation_correlation,
            "flipped": r.stage3.flipped,
        },
        "representatives": r.dimension_representatives().iter().map(|d| json!({
            "dimension": d.dimension, "variable": d.variable, "correlation": d.correlation,
        })).collect::<Vec<_>>(),
        "inactive_dimensions": r.inactive_dimensions(),
        "cronbach_alpha": r.cronbach_alpha,
        "warnings": r.warnings,
    });
    if let Some(a) = audit {
        out["audit"] = json!(a.entries.iter().map(ToString::to_string).collect::<Vec<_>>());
    }
    if cfg.inputs.geometry.is_some() {
        let geometry = load_geometry(cfg, &mut scratch)?;
        match geometry.weights_for(table.unit_ids(), cfg.spatial.quantum) {
            Ok((w, isolated)) => {
                let d = w.degrees();
                out["weights"] = json!({
                    "units": w.n_units(),
                    "links": d.iter().sum::<usize>() / 2,
                    "min_degree": d.iter().min(),
                    "max_degree": d.iter().max(),
                    "mean_degree": d.iter().sum::<usize>() as f64 / d.len().max(1) as f64,
                    "isolated": isolated,
                });
            }
            Err(e) if e.kind == ErrorKind::Data => out["weights"] = json!({ "error": e.message }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
