use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;

use super::IngestError;

/// A single attribute value from a micro record. Cells that parse as a
/// finite number become `Number`; anything else non-empty is `Text`; empty
/// cells are absent from the record.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    Number(f64),
    Text(String),
}

impl AttrValue {
    pub fn parse(cell: &str) -> Option<AttrValue> {
        let cell = cell.trim();
        if cell.is_empty() {
            return None;
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(AttrValue::Number(v)),
            _ => Some(AttrValue::Text(cell.to_owned())),
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            AttrValue::Number(v) => Some(*v),
            AttrValue::Text(_) => None,
        }
    }

    /// Equality used by rule predicates: numeric when both sides are
    /// numbers, textual otherwise.
    pub fn matches(&self, other: &AttrValue) -> bool {
        match (self, other) {
            (AttrValue::Number(a), AttrValue::Number(b)) => a == b,
            _ => self.to_string() == other.to_string(),
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Number(v) => write!(f, "{v}"),
            AttrValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroRecord {
    pub unit_id: String,
    pub weight: f64,
    pub attributes: HashMap<String, AttrValue>,
}

impl MicroRecord {
    pub fn new(unit_id: impl Into<String>, weight: f64) -> Self {
        Self {
            unit_id: unit_id.into(),
            weight,
            attributes: HashMap::new(),
        }
    }

    pub fn with(mut self, attr: impl Into<String>, value: AttrValue) -> Self {
        self.attributes.insert(attr.into(), value);
        self
    }

    pub fn with_num(self, attr: impl Into<String>, value: f64) -> Self {
        self.with(attr, AttrValue::Number(value))
    }

    pub fn get(&self, attr: &str) -> Option<&AttrValue> {
        self.attributes.get(attr)
    }

    pub fn number(&self, attr: &str) -> Option<f64> {
        self.get(attr).and_then(AttrValue::as_number)
    }
}

/// Records grouped by universe name (typically `persons` and `households`).
pub type RecordSets = BTreeMap<String, Vec<MicroRecord>>;

/// Column layout of a delimited microdata file.
#[derive(Debug, Clone)]
pub struct RecordFormat {
    pub delimiter: u8,
    pub unit_column: String,
    pub weight_column: String,
}

impl Default for RecordFormat {
    fn default() -> Self {
        Self {
            delimiter: b',',
            unit_column: "unit_id".to_owned(),
            weight_column: "weight".to_owned(),
        }
    }
}

/// Reads micro records from delimited text with a header row.
pub fn read_records<R: Read>(reader: R, format: &RecordFormat) -> Result<Vec<MicroRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_owned()))
    };
    let unit_col = find(&format.unit_column)?;
    let weight_col = find(&format.weight_column)?;

    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let line = line + 2;
        let unit_id = row.get(unit_col).unwrap_or("").trim().to_owned();
        if unit_id.is_empty() {
            return Err(IngestError::InvalidRecord {
                line,
                reason: "empty unit id".into(),
            });
        }
        let weight: f64 = row
            .get(weight_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| IngestError::InvalidRecord {
                line,
                reason: "weight is not a number".into(),
            })?;
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(IngestError::InvalidRecord {
                line,
                reason: format!("weight must be positive, got {weight}"),
            });
        }
        let mut attributes = HashMap::new();
        for (i, cell) in row.iter().enumerate() {
            if i == unit_col || i == weight_col {
                continue;
            }
            if let Some(v) = AttrValue::parse(cell) {
                attributes.insert(headers[i].to_owned(), v);
            }
        }
        out.push(MicroRecord {
            unit_id,
            weight,
            attributes,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_numbers_text_and_missing() {
        let data = "unit_id,weight,age,race\nA,2.5,34,white\nA,1,,black\n";
        let recs = read_records(data.as_bytes(), &RecordFormat::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].number("age"), Some(34.0));
        assert_eq!(recs[0].get("race"), Some(&AttrValue::Text("white".into())));
        assert!(recs[1].get("age").is_none());
    }

    #[test]
    fn rejects_non_positive_weight() {
        let data = "unit_id,weight\nA,0\n";
        let err = read_records(data.as_bytes(), &RecordFormat::default()).unwrap_err();
        assert!(matches!(err, IngestError::InvalidRecord { line: 2, .. }));
    }

    #[test]
    fn numeric_and_text_equality() {
        assert!(AttrValue::Number(1.0).matches(&AttrValue::Text("1".into())));
        assert!(!AttrValue::Number(1.0).matches(&AttrValue::Number(2.0)));
    }
}
