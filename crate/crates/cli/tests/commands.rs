use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geoses::ingest::format_sig15;
use geoses::{synth, VariableCatalog};
use geoses_cli::commands::{cmd_build_index, cmd_dump_diagnostics, cmd_render_map, cmd_validate};
use geoses_cli::config::RunConfig;
use geoses_cli::exports::{self, IndexExport};
use geoses_cli::fixtures::{write_fixture, FixtureSpec};
use geoses_cli::geometry::to_geojson;
use geoses_cli::html;
use geoses_cli::ErrorKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn three_units() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_units/config.toml")
}

fn geoses(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoses")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bundled_fixture_smoke() {
    let out = tempfile::tempdir().unwrap();
    let o = geoses(&["--config", s(&three_units()), "--output-dir", s(out.path()), "build-index"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let export = IndexExport::read(&out.path().join(exports::INDEX_FILE)).unwrap();
    assert_eq!(export.unit_ids.len(), 3);
    for layer in &export.values {
        assert!(layer.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    let o = geoses(&["--config", s(&three_units()), "--output-dir", s(out.path()), "render-map"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.path().join("map.html")).unwrap();
    assert_eq!(text.matches(r#"class="unit""#).count(), 3);
    assert!(!text.contains("mobility"));
    let data = html::embedded_data(&text).unwrap();
    for (i, unit) in data["units"].as_array().unwrap().iter().enumerate() {
        for (k, v) in unit["values"].as_array().unwrap().iter().enumerate() {
            assert_eq!(v.as_str().unwrap(), export.text[k][i]);
        }
    }
}

#[test]
fn missing_coordinate_names_the_unit() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        records_per_unit: 25,
        ..FixtureSpec::new(16, 3)
    };
    let p = write_fixture(dir.path(), &spec).unwrap();
    let text = std::fs::read_to_string(&p.coordinates).unwrap();
    let pruned: String = text.lines().filter(|l| !l.starts_with("U0007")).map(|l| format!("{l}\n")).collect();
    std::fs::write(&p.coordinates, pruned).unwrap();
    let o = geoses(&["--config", s(p.microdata_config.as_ref().unwrap()), "build-index"]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("U0007") && err.contains("ingest"), "{err}");
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = geoses(&["--config", s(&three_units()), "--output-dir", s(out), "build-index"]);
        assert!(o.status.success());
    }
    for f in [exports::INDEX_FILE, exports::SELECTION_FILE, exports::AREA_TABLE_FILE, exports::CORRELATION_FILE] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn microdata_and_table_inputs_agree_on_structure() {
    let dir = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        records_per_unit: 60,
        ..FixtureSpec::new(64, 21)
    };
    let p = write_fixture(dir.path(), &spec).unwrap();
    let cfg = RunConfig::load(p.microdata_config.as_ref().unwrap()).unwrap();
    let built = cmd_build_index(&cfg).unwrap();
    assert_eq!(built.result.unit_ids.len(), 64);
    let out = cfg.output_dir();
    assert!(out.join(exports::AUDIT_FILE).exists());
    let audit = std::fs::read_to_string(out.join(exports::AUDIT_FILE)).unwrap();
    assert!(audit.contains("threshold"));
    assert_eq!(built.manifest.inputs.iter().filter(|f| f.role.starts_with("microdata")).count(), 1);
}

/// Writes an index export, outcome and geometry for a grid of `n` units.
fn spatial_inputs(dir: &Path, layers: &[&str], index: &[Vec<f64>], outcome: &[f64], cols: usize) -> RunConfig {
    let n = outcome.len();
    let region = synth::region(n, 0);
    assert_eq!(region.grid_cols, cols);
    let mut csv = format!("unit_id,{}\n", layers.join(","));
    for i in 0..n {
        let row: Vec<String> = index.iter().map(|c| format_sig15(c[i])).collect();
        csv.push_str(&format!("{},{}\n", region.unit_ids[i], row.join(",")));
    }
    std::fs::write(dir.join("index.csv"), csv).unwrap();
    let mut o = String::from("unit_id,rr\n");
    for i in 0..n {
        o.push_str(&format!("{},{}\n", region.unit_ids[i], format_sig15(outcome[i])));
    }
    std::fs::write(dir.join("outcome.csv"), o).unwrap();
    std::fs::write(
        dir.join("geometry.geojson"),
        to_geojson(&region.unit_ids, &region.geometries, "unit_id", &[]),
    )
    .unwrap();
    let mut cfg = RunConfig::default();
    cfg.inputs.index = Some(dir.join("index.csv"));
    cfg.inputs.outcome = Some(dir.join("outcome.csv"));
    cfg.inputs.geometry = Some(dir.join("geometry.geojson"));
    cfg.output_dir = Some(dir.join("out"));
    cfg.spatial.seed = Some(17);
    cfg.spatial.neighbor_count = Some(30);
    cfg
}

fn scaled(v: &[f64]) -> Vec<f64> {
    geoses::stats::min_max_to_unit_interval(v).unwrap()
}

#[test]
fn affine_outcome_ranks_the_index_first() {
    let dir = tempfile::tempdir().unwrap();
    let region = synth::region(100, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let index = scaled(&region.latent);
    let dims: Vec<Vec<f64>> = (0..3)
        .map(|_| scaled(&index.iter().map(|v| v + 0.6 * rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))
        .collect();
    let y: Vec<f64> = index.iter().map(|v| 1.0 - 0.4 * v + 0.002 * rng.gen_range(-1.0..1.0)).collect();
    let mut cols = vec![index];
    cols.extend(dims);
    let cfg = spatial_inputs(dir.path(), &["geoses", "income", "poverty", "wealth"], &cols, &y, 10);
    let out = cmd_validate(&cfg).unwrap();
    assert_eq!(out.gwr.len(), 4);
    assert!(out.gwr[0].best && out.ols[0].best);
    let fit = out.ols[0].fit.as_ref().unwrap();
    assert!(fit.moran_i.unwrap().abs() < 0.1, "{:?}", fit.moran_i);
    assert!(fit.adjusted_r2 > 0.99);
}

#[test]
fn seven_dimensions_give_eight_rows_and_stable_p_values() {
    let dir = tempfile::tempdir().unwrap();
    let n = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let base: Vec<f64> = (0..n).map(|i| ((i % 8) as f64 / 3.0).sin() + rng.gen_range(0.0..0.5)).collect();
    let names = ["geoses", "education", "mobility", "poverty", "wealth", "income", "segregation", "deprivation"];
    let cols: Vec<Vec<f64>> = names
        .iter()
        .map(|_| scaled(&base.iter().map(|v| v + 0.3 * rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))
        .collect();
    let y: Vec<f64> = base.iter().map(|v| 2.0 + v + 0.2 * rng.gen_range(-1.0..1.0)).collect();
    let mut cfg = spatial_inputs(dir.path(), &names, &cols, &y, 8);
    cfg.spatial.neighbor_count = Some(20);
    let a = cmd_validate(&cfg).unwrap();
    let first = std::fs::read(dir.path().join("out").join(exports::VALIDATION_FILE)).unwrap();
    let b = cmd_validate(&cfg).unwrap();
    let second = std::fs::read(dir.path().join("out").join(exports::VALIDATION_FILE)).unwrap();
    assert_eq!(a.gwr.len(), 8);
    assert_eq!(a.gwr, b.gwr);
    assert_eq!(first, second);
    let (_, rows) = exports::read_validation(&dir.path().join("out").join(exports::VALIDATION_FILE)).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[2][0], "geoses-mobility");
}

#[test]
fn outcome_mismatch_lists_the_ids() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_fixture(dir.path(), &FixtureSpec::new(25, 2)).unwrap();
    let cfg = RunConfig::load(&p.config).unwrap();
    cmd_build_index(&cfg).unwrap();
    let text = std::fs::read_to_string(&p.outcome).unwrap();
    let edited = text.replace("U0003,", "X9999,");
    std::fs::write(&p.outcome, edited).unwrap();
    let err = cmd_validate(&cfg).unwrap_err();
    assert_eq!(err.kind, ErrorKind::Data);
    assert!(err.message.contains("U0003") && err.message.contains("X9999"), "{}", err.message);
}

#[test]
fn adjacency_geometry_with_coordinates_validates() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_fixture(dir.path(), &FixtureSpec::new(49, 6)).unwrap();
    let mut cfg = RunConfig::load(&p.config).unwrap();
    cmd_build_index(&cfg).unwrap();
    let polygons = cmd_validate(&cfg).unwrap();
    cfg.inputs.geometry = Some(p.adjacency.clone());
    assert_eq!(cmd_validate(&cfg).unwrap_err().kind, ErrorKind::Usage);
    cfg.inputs.coordinates = Some(p.coordinates.clone());
    let adjacency = cmd_validate(&cfg).unwrap();
    assert_eq!(polygons.gwr, adjacency.gwr);
}

#[test]
fn seed_is_required_for_permutations() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_fixture(dir.path(), &FixtureSpec::new(25, 2)).unwrap();
    assert!(geoses(&["--config", s(&p.config), "build-index"]).status.success());
    let o = geoses(&[
        "--config",
        s(&p.config),
        "validate",
        "--permutations",
        "99",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut cfg = RunConfig::load(&p.config).unwrap();
    cfg.spatial.seed = None;
    assert_eq!(cmd_validate(&cfg).unwrap_err().kind, ErrorKind::Usage);
}

#[test]
fn unit_without_geometry_is_reported_in_the_map() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_fixture(dir.path(), &FixtureSpec::new(9, 4)).unwrap();
    let cfg = RunConfig::load(&p.config).unwrap();
    cmd_build_index(&cfg).unwrap();
    let region = synth::region(9, 4);
    let gj = to_geojson(&region.unit_ids[1..], &region.geometries[1..], "unit_id", &[]);
    std::fs::write(&p.geometry, gj).unwrap();
    let out = cmd_render_map(&cfg, Some(&dir.path().join("maps/m.html"))).unwrap();
    assert_eq!(out.warnings, vec!["units without geometry: U0000".to_owned()]);
    let text = std::fs::read_to_string(dir.path().join("maps/m.html")).unwrap();
    assert!(text.contains(r#"id="warnings""#) && text.contains("U0000"));
    assert_eq!(text.matches(r#"class="unit""#).count(), 8);

    let o = geoses(&["--config", s(&p.config), "render-map"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("units without geometry: U0000"));
}

#[test]
fn geojson_export_carries_the_layers() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_fixture(dir.path(), &FixtureSpec::new(16, 8)).unwrap();
    let cfg = RunConfig::load(&p.config).unwrap();
    let built = cmd_build_index(&cfg).unwrap();
    cmd_render_map(&cfg, None).unwrap();
    let text = std::fs::read_to_string(cfg.output_dir().join("index.geojson")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let features = v["features"].as_array().unwrap();
    assert_eq!(features.len(), 16);
    let props = &features[0]["properties"];
    let expected: f64 = format_sig15(built.result.scores[0]).parse().unwrap();
    assert_eq!(props["geoses"].as_f64().unwrap(), expected);
    for d in built.result.active_dimensions() {
        assert!(props.get(d).is_some());
    }
}

#[test]
fn diagnostics_expose_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_fixture(dir.path(), &FixtureSpec::new(36, 9)).unwrap();
    let cfg = RunConfig::load(&p.config).unwrap();
    let d = cmd_dump_diagnostics(&cfg).unwrap();
    let catalog = VariableCatalog::default_catalog();
    assert_eq!(d["stage1"].as_array().unwrap().len(), catalog.dimensions().len());
    assert!(d["stage3"]["orientation_correlation"].as_f64().unwrap() >= 0.0);
    assert_eq!(d["weights"]["units"], 36);
    assert_eq!(d["weights"]["max_degree"], 8);

    let o = geoses(&["--config", s(&p.config), "dump-diagnostics"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["catalog_hash"], d["catalog_hash"]);
}

#[test]
fn exit_codes_are_documented_and_distinct() {
    let help = geoses(&["--help"]);
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(text.contains("Exit codes") && text.contains("5 numerical"));
    assert_eq!(geoses(&["bogus"]).status.code(), Some(2));
    assert_eq!(geoses(&["--config", "/nonexistent/run.toml", "build-index"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("t.csv");
    std::fs::write(&bad, "unit_id,x,y\nA,0,zero\n").unwrap();
    let o = geoses(&["--output-dir", s(&dir.path().join("o")), "build-index", "--area-table", s(&bad)]);
    assert_eq!(o.status.code(), Some(3));

    let p = write_fixture(&dir.path().join("fx"), &FixtureSpec::new(9, 1)).unwrap();
    let text = std::fs::read_to_string(&p.area_table).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "P_MOTO").unwrap();
    let mut cells: Vec<String> = lines[1].split(',').map(str::to_owned).collect();
    cells[col] = "150".into();
    lines[1] = cells.join(",");
    std::fs::write(&p.area_table, lines.join("\n") + "\n").unwrap();
    let o = geoses(&["--config", s(&p.config), "build-index"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
