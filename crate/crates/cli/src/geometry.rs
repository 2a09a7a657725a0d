//! Unit geometry input: GeoJSON polygons or a plain adjacency list.

use std::collections::HashMap;
use std::io::BufReader;
use std::path::Path;

use geojson::{Feature, FeatureCollection, GeoJson, Value};
use geoses::spatial::{centroid, parse_adjacency_list, queen_contiguity, Polygon, SpatialWeights, UnitGeometry};

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub enum GeometrySource {
    Polygons { unit_ids: Vec<String>, shapes: Vec<UnitGeometry> },
    Adjacency(SpatialWeights),
}

fn to_ring(positions: &[Vec<f64>]) -> Vec<[f64; 2]> {
    positions.iter().map(|p| [p[0], p[1]]).collect()
}

fn to_polygon(rings: &[Vec<Vec<f64>>]) -> Option<Polygon> {
    let (exterior, holes) = rings.split_first()?;
    Some(Polygon {
        exterior: to_ring(exterior),
        holes: holes.iter().map(|h| to_ring(h)).collect(),
    })
}

fn feature_id(f: &Feature, property: &str) -> Option<String> {
    match f.property(property)? {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Parses a GeoJSON FeatureCollection whose features carry the unit id in
/// `id_property`. Polygon and MultiPolygon geometries are accepted.
pub fn parse_geojson(text: &str, id_property: &str) -> Result<(Vec<String>, Vec<UnitGeometry>)> {
    let gj: GeoJson = text.parse().map_err(|e| CliError::input(format!("GeoJSON: {e}")))?;
    let fc = FeatureCollection::try_from(gj).map_err(|e| CliError::input(format!("GeoJSON: {e}")))?;
    let mut ids = Vec::with_capacity(fc.features.len());
    let mut shapes = Vec::with_capacity(fc.features.len());
    for (k, f) in fc.features.iter().enumerate() {
        let id = feature_id(f, id_property)
            .ok_or_else(|| CliError::input(format!("GeoJSON feature {k} has no `{id_property}` property")))?;
        let shape: UnitGeometry = match f.geometry.as_ref().map(|g| &g.value) {
            Some(Value::Polygon(rings)) => to_polygon(rings).into_iter().collect(),
            Some(Value::MultiPolygon(parts)) => parts.iter().filter_map(|p| to_polygon(p)).collect(),
            Some(_) => {
                return Err(CliError::input(format!(
                    "GeoJSON feature `{id}`: only Polygon and MultiPolygon are supported"
                )))
            }
            None => Vec::new(),
        };
        ids.push(id);
        shapes.push(shape);
    }
    Ok((ids, shapes))
}

impl GeometrySource {
    /// GeoJSON when the file starts with `{`, an adjacency list otherwise.
    pub fn load(path: &Path, id_property: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let ctx = |e: CliError| e.context(path.display());
        if text.trim_start().starts_with('{') {
            let (unit_ids, shapes) = parse_geojson(&text, id_property).map_err(ctx)?;
            Ok(Self::Polygons { unit_ids, shapes })
        } else {
            let w = parse_adjacency_list(BufReader::new(text.as_bytes()))
                .map_err(|e| ctx(CliError::from(e)))?;
            Ok(Self::Adjacency(w))
        }
    }

    pub fn unit_ids(&self) -> &[String] {
        match self {
            Self::Polygons { unit_ids, .. } => unit_ids,
            Self::Adjacency(w) => w.unit_ids(),
        }
    }

    pub fn shapes(&self) -> Option<(&[String], &[UnitGeometry])> {
        match self {
            Self::Polygons { unit_ids, shapes } => Some((unit_ids, shapes)),
            Self::Adjacency(_) => None,
        }
    }

    /// Queen weights ordered like `unit_ids`, plus the ids of isolated units.
    /// Every requested unit must be present in the geometry.
    pub fn weights_for(&self, unit_ids: &[String], quantum: f64) -> Result<(SpatialWeights, Vec<String>)> {
        let w = match self {
            Self::Polygons { unit_ids: ids, shapes } => {
                let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
                let mut missing = Vec::new();
                let mut picked = Vec::with_capacity(unit_ids.len());
                for u in unit_ids {
                    match pos.get(u.as_str()) {
                        Some(&i) => picked.push(shapes[i].clone()),
                        None => missing.push(u.clone()),
                    }
                }
                if !missing.is_empty() {
                    return Err(CliError::data(format!("units without geometry: {}", missing.join(", "))));
                }
                queen_contiguity(unit_ids, &picked, quantum)?.0
            }
            Self::Adjacency(w) => w.reordered(unit_ids)?,
        };
        let isolated = w.isolated_ids();
        Ok((w, isolated))
    }

    /// Polygon centroids by unit id; `None` for adjacency input.
    pub fn centroids(&self) -> Option<HashMap<String, [f64; 2]>> {
        let (ids, shapes) = self.shapes()?;
        Some(
            ids.iter()
                .zip(shapes)
                .filter_map(|(id, s)| centroid(s).map(|c| (id.clone(), c)))
                .collect(),
        )
    }
}

/// FeatureCollection of `shapes` with the given per-unit numeric properties.
pub fn to_geojson(
    unit_ids: &[String],
    shapes: &[UnitGeometry],
    id_property: &str,
    properties: &[(String, Vec<f64>)],
) -> String {
    let pos = |r: &[[f64; 2]]| r.iter().map(|p| vec![p[0], p[1]]).collect::<Vec<_>>();
    let features = unit_ids
        .iter()
        .zip(shapes)
        .enumerate()
        .map(|(i, (id, shape))| {
            let parts: Vec<Vec<Vec<Vec<f64>>>> = shape
                .iter()
                .map(|p| std::iter::once(pos(&p.exterior)).chain(p.holes.iter().map(|h| pos(h))).collect())
                .collect();
            let mut props = serde_json::Map::new();
            props.insert(id_property.to_owned(), serde_json::Value::String(id.clone()));
            for (name, values) in properties {
                props.insert(name.clone(), serde_json::json!(values[i]));
            }
            Feature {
                bbox: None,
                geometry: Some(geojson::Geometry::new(Value::MultiPolygon(parts))),
                id: None,
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    }
    .to_string()
}
