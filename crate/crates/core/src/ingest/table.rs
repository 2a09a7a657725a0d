use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use super::IngestError;
use crate::catalog::{VariableCatalog, VariableKind};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

/// Aggregated variable values per geographic unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaTable {
    unit_ids: Vec<String>,
    coordinates: Vec<[f64; 2]>,
    columns: Vec<Column>,
    /// Denominator weight behind each value, per variable (audit only; empty
    /// for tables read from an aggregated file).
    population: BTreeMap<String, Vec<f64>>,
}

impl AreaTable {
    pub fn new(
        unit_ids: Vec<String>,
        coordinates: Vec<[f64; 2]>,
        columns: Vec<Column>,
    ) -> Result<Self, IngestError> {
        let n = unit_ids.len();
        if coordinates.len() != n {
            return Err(IngestError::Shape(format!(
                "{} coordinates for {n} units",
                coordinates.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &unit_ids {
            if !seen.insert(id) {
                return Err(IngestError::Shape(format!("duplicate unit id `{id}`")));
            }
        }
        let mut names = HashSet::new();
        for c in &columns {
            if c.values.len() != n {
                return Err(IngestError::Shape(format!(
                    "column `{}` has {} values for {n} units",
                    c.name,
                    c.values.len()
                )));
            }
            if !names.insert(&c.name) {
                return Err(IngestError::Shape(format!("duplicate column `{}`", c.name)));
            }
            if let Some(v) = c.values.iter().find(|v| !v.is_finite()) {
                return Err(IngestError::Shape(format!("column `{}` has non-finite value {v}", c.name)));
            }
        }
        Ok(Self {
            unit_ids,
            coordinates,
            columns,
            population: BTreeMap::new(),
        })
    }

    /// Skips validation; columns may hold NaN for units about to be dropped.
    pub(crate) fn from_parts_unchecked(
        unit_ids: Vec<String>,
        coordinates: Vec<[f64; 2]>,
        columns: Vec<Column>,
    ) -> Self {
        Self {
            unit_ids,
            coordinates,
            columns,
            population: BTreeMap::new(),
        }
    }

    pub fn with_population(mut self, population: BTreeMap<String, Vec<f64>>) -> Self {
        self.population = population;
        self
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn coordinates(&self) -> &[[f64; 2]] {
        &self.coordinates
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn population(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.population
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn column_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.columns
            .iter_mut()
            .find(|c| c.name == name)
            .map(|c| &mut c.values)
    }

    /// Units × variables matrix for the named columns, in the given order.
    pub fn matrix(&self, names: &[String]) -> Result<Matrix, IngestError> {
        let cols = names
            .iter()
            .map(|n| {
                self.column(n)
                    .ok_or_else(|| IngestError::MissingColumn(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Matrix::from_columns(&cols))
    }

    /// Adds `constant` to every cell.
    pub fn shifted(&self, constant: f64) -> AreaTable {
        let mut out = self.clone();
        for c in &mut out.columns {
            for v in &mut c.values {
                *v += constant;
            }
        }
        out
    }

    /// Keeps only units where `keep` is true.
    pub fn retain_units(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.n_units());
        let filter = |v: &mut Vec<f64>| {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        };
        let mut it = keep.iter();
        self.unit_ids.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.coordinates.retain(|_| *it.next().unwrap());
        self.columns.iter_mut().for_each(|c| filter(&mut c.values));
        self.population.values_mut().for_each(filter);
    }

    /// Checks value ranges for the catalog kinds: percentages in [0, 100],
    /// ICE in [-1, 1]. Also requires every catalog variable to be present.
    pub fn check_invariants(&self, catalog: &VariableCatalog) -> Result<(), IngestError> {
        for var in catalog.variables() {
            let values = self
                .column(&var.name)
                .ok_or_else(|| IngestError::MissingColumn(var.name.clone()))?;
            let (lo, hi) = match var.kind {
                VariableKind::Percentage => (0.0, 100.0),
                VariableKind::IceRatio => (-1.0, 1.0),
                VariableKind::WeightedMean => continue,
            };
            if let Some((i, v)) = values
                .iter()
                .enumerate()
                .find(|(_, v)| !(lo..=hi).contains(*v))
            {
                return Err(IngestError::OutOfRange {
                    variable: var.name.clone(),
                    unit: self.unit_ids[i].clone(),
                    value: *v,
                });
            }
        }
        Ok(())
    }

    /// Writes `unit_id,x,y,<columns...>` with 15 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["unit_id".to_owned(), "x".to_owned(), "y".to_owned()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for i in 0..self.n_units() {
            let mut row = vec![
                self.unit_ids[i].clone(),
                format_sig15(self.coordinates[i][0]),
                format_sig15(self.coordinates[i][1]),
            ];
            row.extend(self.columns.iter().map(|c| format_sig15(c.values[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout produced by [`AreaTable::write_csv`].
    pub fn read_csv<R: Read>(reader: R, delimiter: u8) -> Result<AreaTable, IngestError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let pos = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| IngestError::MissingColumn(name.to_owned()))
        };
        let (iu, ix, iy) = (pos("unit_id")?, pos("x")?, pos("y")?);
        let value_cols: Vec<usize> = (0..headers.len()).filter(|i| ![iu, ix, iy].contains(i)).collect();
        let mut unit_ids = Vec::new();
        let mut coords = Vec::new();
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); value_cols.len()];
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            let num = |i: usize| -> Result<f64, IngestError> {
                row.get(i).unwrap_or("").trim().parse().map_err(|_| IngestError::InvalidRecord {
                    line: line + 2,
                    reason: format!("column `{}` is not a number", &headers[i]),
                })
            };
            unit_ids.push(row.get(iu).unwrap_or("").trim().to_owned());
            coords.push([num(ix)?, num(iy)?]);
            for (k, &i) in value_cols.iter().enumerate() {
                values[k].push(num(i)?);
            }
        }
        let columns = value_cols
            .iter()
            .zip(values)
            .map(|(&i, values)| Column {
                name: headers[i].to_owned(),
                values,
            })
            .collect();
        AreaTable::new(unit_ids, coords, columns)
    }

    /// Reorders columns to catalog order and drops anything not in the catalog.
    pub fn restrict_to_catalog(&self, catalog: &VariableCatalog) -> Result<AreaTable, IngestError> {
        let columns = catalog
            .variables()
            .map(|v| {
                self.column(&v.name)
                    .map(|vals| Column {
                        name: v.name.clone(),
                        values: vals.to_vec(),
                    })
                    .ok_or_else(|| IngestError::MissingColumn(v.name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AreaTable {
            unit_ids: self.unit_ids.clone(),
            coordinates: self.coordinates.clone(),
            columns,
            population: self.population.clone(),
        })
    }
}

/// Shortest decimal representation of `v` rounded to 15 significant digits.
/// Locale independent; `-0` prints as `0`.
pub fn format_sig15(v: f64) -> String {
    if v == 0.0 {
        return "0".to_owned();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.14e}").parse().expect("valid float");
    format!("{rounded}")
}

/// Reads `unit_id,x,y` coordinates.
pub fn read_coordinates<R: Read>(reader: R, delimiter: u8) -> Result<BTreeMap<String, [f64; 2]>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_owned()))
    };
    let (iu, ix, iy) = (pos("unit_id")?, pos("x")?, pos("y")?);
    let mut out = BTreeMap::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let num = |i: usize| -> Result<f64, IngestError> {
            row.get(i).unwrap_or("").trim().parse().map_err(|_| IngestError::InvalidRecord {
                line: line + 2,
                reason: "coordinate is not a number".into(),
            })
        };
        out.insert(row.get(iu).unwrap_or("").trim().to_owned(), [num(ix)?, num(iy)?]);
    }
    Ok(out)
}
