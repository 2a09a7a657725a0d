//! Delimited exports. Every number is written with `format_sig15`, so files
//! are locale independent and byte-stable across runs.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use geoses::index::IndexResult;
use geoses::ingest::{format_sig15, AreaTable, AuditEntry, AuditLog};
use geoses::spatial::{ModelKind, SpatialFit};
use geoses::CorrelationMatrix;

use crate::error::{CliError, Result};

pub const INDEX_FILE: &str = "index.csv";
pub const INDEX_COLUMN: &str = "geoses";
pub const AREA_TABLE_FILE: &str = "area_table.csv";
pub const AUDIT_FILE: &str = "audit.csv";
pub const SELECTION_FILE: &str = "selection.csv";
pub const REPRESENTATIVES_FILE: &str = "representatives.csv";
pub const REPRESENTATIVES_RAW_FILE: &str = "representatives_raw.csv";
pub const CORRELATION_FILE: &str = "correlation.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const VALIDATION_OLS_FILE: &str = "validation_ols.csv";
pub const LOCAL_FILE: &str = "local_coefficients.csv";

/// Column header of the validation tables.
pub const VALIDATION_HEADER: [&str; 6] = ["indicator", "adjusted_r2", "aicc", "morans_i", "p_value", "note"];

/// Marks the lowest AICc in a validation table.
pub const BEST_MARK: &str = "*";
/// Marks residual spatial dependence.
pub const DEPENDENCE_MARK: &str = "#";
/// Stands in for values of a model that could not be fitted.
pub const NOT_FITTED: &str = "--";

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, format_sig15)
}

/// `unit_id,geoses,<active dimensions...>`.
pub fn write_index(path: &Path, result: &IndexResult) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["unit_id", INDEX_COLUMN];
    header.extend(result.active_dimensions());
    w.write_record(&header)?;
    for (i, id) in result.unit_ids.iter().enumerate() {
        let mut row = vec![id.clone(), format_sig15(result.scores[i])];
        row.extend(result.decomposition.scores.iter().map(|s| format_sig15(s[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// An index export as read back: the raw cell text is kept so reports can
/// repeat it verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexExport {
    pub unit_ids: Vec<String>,
    /// `geoses` followed by the active dimensions.
    pub layers: Vec<String>,
    /// `text[layer][unit]`.
    pub text: Vec<Vec<String>>,
    pub values: Vec<Vec<f64>>,
}

impl IndexExport {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("unit_id") || headers.get(1) != Some(INDEX_COLUMN) {
            return Err(CliError::input(format!(
                "{}: expected header starting with `unit_id,{INDEX_COLUMN}`",
                path.display()
            )));
        }
        let layers: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let mut out = Self {
            unit_ids: Vec::new(),
            text: vec![Vec::new(); layers.len()],
            values: vec![Vec::new(); layers.len()],
            layers,
        };
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            out.unit_ids.push(row[0].to_owned());
            for k in 0..out.layers.len() {
                let cell = row.get(k + 1).unwrap_or("");
                let v: f64 = cell.parse().map_err(|_| {
                    CliError::input(format!(
                        "{} line {}: `{}` value `{cell}` is not a number",
                        path.display(),
                        line + 2,
                        out.layers[k]
                    ))
                })?;
                out.text[k].push(cell.to_owned());
                out.values[k].push(v);
            }
        }
        Ok(out)
    }

    pub fn layer(&self, name: &str) -> Option<&[f64]> {
        self.layers.iter().position(|l| l == name).map(|k| self.values[k].as_slice())
    }

    pub fn dimensions(&self) -> &[String] {
        &self.layers[1..]
    }
}

pub fn write_area_table(path: &Path, table: &AreaTable) -> Result<()> {
    let f = File::create(path)?;
    table.write_csv(BufWriter::new(f))?;
    Ok(())
}

pub fn write_audit(path: &Path, audit: &AuditLog) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["kind", "unit", "variable", "value", "detail"])?;
    for e in &audit.entries {
        let row: [String; 5] = match e {
            AuditEntry::Missing { unit, variable } => {
                ["missing".into(), unit.clone(), variable.clone(), String::new(), String::new()]
            }
            AuditEntry::Dropped { unit } => ["dropped".into(), unit.clone(), String::new(), String::new(), String::new()],
            AuditEntry::Imputed { unit, variable, value } => {
                ["imputed".into(), unit.clone(), variable.clone(), format_sig15(*value), String::new()]
            }
            AuditEntry::Threshold {
                universe,
                attribute,
                pct,
                value,
            } => [
                "threshold".into(),
                String::new(),
                format!("{universe}.{attribute}"),
                format_sig15(*value),
                format!("P{}", format_sig15(*pct)),
            ],
            AuditEntry::Warning(m) => ["warning".into(), String::new(), String::new(), String::new(), m.clone()],
        };
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Loadings and selections of every stage:
/// `stage,dimension,variable,component,loading,selected`. Stage 1 lists
/// every retained component of each dimension.
pub fn write_selection(path: &Path, result: &IndexResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["stage", "dimension", "variable", "component", "loading", "selected"])?;
    let flag = |b: bool| if b { "1" } else { "0" };
    for d in &result.stage1 {
        for k in 0..d.retained_components {
            for (i, v) in d.candidates.iter().enumerate() {
                w.write_record([
                    "1",
                    &d.dimension,
                    v,
                    &(k + 1).to_string(),
                    &format_sig15(d.loadings.row(i)[k]),
                    flag(d.selected.contains(v)),
                ])?;
            }
        }
    }
    let s2 = &result.stage2;
    for (v, l) in s2.candidates.iter().zip(&s2.first_loadings) {
        w.write_record(["2", "", v, "1", &format_sig15(*l), flag(s2.selected.contains(v))])?;
    }
    for (v, l) in result.final_loadings() {
        w.write_record(["3", "", v, "1", &format_sig15(l), "1"])?;
    }
    w.flush()?;
    Ok(())
}

/// `dimension,variable,correlation` and the raw representative columns.
pub fn write_representatives(dir: &Path, result: &IndexResult) -> Result<()> {
    let reps = result.dimension_representatives();
    let mut w = writer(&dir.join(REPRESENTATIVES_FILE))?;
    w.write_record(["dimension", "variable", "correlation"])?;
    for r in reps {
        w.write_record([&r.dimension, &r.variable, &format_sig15(r.correlation)])?;
    }
    w.flush()?;

    let mut w = writer(&dir.join(REPRESENTATIVES_RAW_FILE))?;
    let mut header = vec!["unit_id"];
    header.extend(reps.iter().map(|r| r.variable.as_str()));
    w.write_record(&header)?;
    for (i, id) in result.unit_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(result.decomposition.raw.iter().map(|c| format_sig15(c[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Square correlation matrix with a leading name column.
pub fn write_correlation(path: &Path, m: &CorrelationMatrix) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec![String::new()];
    header.extend(m.variable_names.iter().cloned());
    w.write_record(&header)?;
    for a in &m.variable_names {
        let mut row = vec![a.clone()];
        for b in &m.variable_names {
            row.push(format_sig15(m.get(a, b).expect("name from the matrix")));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One validation table row; `fit` is `None` when the model failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub indicator: String,
    pub fit: Option<FitSummary>,
    pub best: bool,
    pub dependence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub adjusted_r2: f64,
    pub aicc: f64,
    pub moran_i: Option<f64>,
    pub moran_p: Option<f64>,
}

impl ValidationRow {
    pub fn note(&self) -> String {
        if self.fit.is_none() {
            return NOT_FITTED.to_owned();
        }
        let mut s = String::new();
        if self.best {
            s.push_str(BEST_MARK);
        }
        if self.dependence {
            s.push_str(DEPENDENCE_MARK);
        }
        s
    }

    pub fn cells(&self) -> [String; 6] {
        match &self.fit {
            Some(f) => [
                self.indicator.clone(),
                format_sig15(f.adjusted_r2),
                format_sig15(f.aicc),
                opt(f.moran_i),
                opt(f.moran_p),
                self.note(),
            ],
            None => [
                self.indicator.clone(),
                NOT_FITTED.into(),
                NOT_FITTED.into(),
                NOT_FITTED.into(),
                NOT_FITTED.into(),
                self.note(),
            ],
        }
    }
}

pub fn write_validation(path: &Path, rows: &[ValidationRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(VALIDATION_HEADER)?;
    for r in rows {
        w.write_record(r.cells())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a validation table back as raw cells.
pub fn read_validation(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let header = rdr.headers()?.iter().map(str::to_owned).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_owned).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

/// Per-unit GWR output: coefficients, fit and bandwidth.
pub fn write_local(path: &Path, unit_ids: &[String], fit: &SpatialFit) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "unit_id",
        "intercept",
        "slope",
        "observed",
        "fitted",
        "residual",
        "std_residual",
        "bandwidth",
    ])?;
    for (i, id) in unit_ids.iter().enumerate() {
        let [a, b] = fit.coefficients_at(i);
        let bw = match fit.model {
            ModelKind::Gwr => format_sig15(fit.bandwidths[i]),
            ModelKind::Ols => String::new(),
        };
        w.write_record([
            id.clone(),
            format_sig15(a),
            format_sig15(b),
            format_sig15(fit.observed[i]),
            format_sig15(fit.fitted[i]),
            format_sig15(fit.residuals[i]),
            format_sig15(fit.standardized_residuals[i]),
            bw,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `unit_id,<value>` (the first column after `unit_id` unless `column`
/// names another) into a map.
pub fn read_unit_values(path: &Path, delimiter: u8, column: Option<&str>) -> Result<HashMap<String, f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let iu = headers
        .iter()
        .position(|h| h == "unit_id")
        .ok_or_else(|| CliError::input(format!("{}: no `unit_id` column", path.display())))?;
    let iv = match column {
        Some(c) => headers.iter().position(|h| h == c),
        None => (0..headers.len()).find(|&i| i != iu),
    }
    .ok_or_else(|| CliError::input(format!("{}: no value column", path.display())))?;
    let mut out = HashMap::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let id = row.get(iu).unwrap_or("").trim().to_owned();
        let cell = row.get(iv).unwrap_or("").trim();
        let v: f64 = cell.parse().map_err(|_| {
            CliError::input(format!("{} line {}: `{cell}` is not a number", path.display(), line + 2))
        })?;
        if !v.is_finite() {
            return Err(CliError::data(format!("{} line {}: non-finite value", path.display(), line + 2)));
        }
        if out.insert(id.clone(), v).is_some() {
            return Err(CliError::input(format!("{}: duplicate unit `{id}`", path.display())));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn notes_combine_marks() {
        let fit = FitSummary {
            adjusted_r2: 0.5,
            aicc: -10.0,
            moran_i: Some(0.1),
            moran_p: Some(0.01),
        };
        let mut r = ValidationRow {
            indicator: "geoses".into(),
            fit: Some(fit),
            best: true,
            dependence: true,
        };
        assert_eq!(r.note(), "*#");
        r.best = false;
        assert_eq!(r.cells()[5], "#");
        r.fit = None;
        assert_eq!(r.cells()[1..], ["--", "--", "--", "--", "--"]);
    }

    #[test]
    fn unit_values_reject_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.csv");
        std::fs::write(&p, "unit_id,rr\na,1.5\nb,0.5\n").unwrap();
        let m = read_unit_values(&p, b',', None).unwrap();
        assert_eq!(m["a"], 1.5);
        std::fs::write(&p, "unit_id,rr\na,1.5\na,0.5\n").unwrap();
        assert!(read_unit_values(&p, b',', None).is_err());
    }
}
