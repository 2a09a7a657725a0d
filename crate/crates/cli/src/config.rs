//! Run configuration: a TOML file whose fields can be overridden by flags.
//!
//! Relative paths in a config file are resolved against the file's
//! directory; paths given as flags are used as given.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use geoses::index::PipelineConfig;
use geoses::ingest::{MissingPolicy, RecordFormat};
use geoses::spatial::{Alternative, GwrConfig, Kernel, MoranConfig, DEFAULT_PERMUTATIONS, DEFAULT_QUANTUM};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Geographic scale of the analysis; sets the default GWR neighbor count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    National,
    State,
    Intramunicipal,
}

impl Scale {
    pub fn default_neighbor_count(self) -> usize {
        match self {
            Scale::National | Scale::State => 53,
            Scale::Intramunicipal => 30,
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "national" => Ok(Self::National),
            "state" => Ok(Self::State),
            "intramunicipal" => Ok(Self::Intramunicipal),
            other => Err(format!("unknown scale `{other}` (national, state or intramunicipal)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inputs {
    /// Pre-aggregated table (`unit_id,x,y,<variables>`).
    pub area_table: Option<PathBuf>,
    /// Microdata files by universe name.
    pub microdata: BTreeMap<String, PathBuf>,
    pub rules: Option<PathBuf>,
    pub coordinates: Option<PathBuf>,
    pub missing_policy: Option<String>,
    /// Reference columns (`unit_id,<columns>`) for the correlation table.
    pub reference: Option<PathBuf>,
    /// Index export read by `validate` and `render-map`.
    pub index: Option<PathBuf>,
    /// `unit_id,<value>` relative risks.
    pub outcome: Option<PathBuf>,
    /// GeoJSON FeatureCollection or adjacency list.
    pub geometry: Option<PathBuf>,
    /// Feature property holding the unit id in GeoJSON input.
    pub id_property: Option<String>,
    pub delimiter: Option<char>,
    pub unit_column: Option<String>,
    pub weight_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub shift_constant: f64,
    pub variance_threshold: f64,
    pub orientation_variable: Option<String>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        Self {
            shift_constant: d.shift_constant,
            variance_threshold: d.variance_threshold,
            orientation_variable: d.orientation_variable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpatialSection {
    /// Defaults to the scale's neighbor count.
    pub neighbor_count: Option<usize>,
    pub kernel: String,
    pub permutations: usize,
    pub seed: Option<u64>,
    pub alternative: String,
    pub quantum: f64,
}

impl Default for SpatialSection {
    fn default() -> Self {
        Self {
            neighbor_count: None,
            kernel: Kernel::default().to_string(),
            permutations: DEFAULT_PERMUTATIONS,
            seed: None,
            alternative: Alternative::default().to_string(),
            quantum: DEFAULT_QUANTUM,
        }
    }
}

pub const DEFAULT_PALETTE: [&str; 3] = ["#b2182b", "#f7f7f7", "#2166ac"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Colors for -1, 0 and +1.
    pub palette: Vec<String>,
    pub title: String,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            palette: DEFAULT_PALETTE.iter().map(|s| (*s).to_owned()).collect(),
            title: "GeoSES".to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Variable catalog; the bundled default when absent.
    pub catalog: Option<PathBuf>,
    pub scale: Scale,
    pub output_dir: Option<PathBuf>,
    pub inputs: Inputs,
    pub pipeline: PipelineSection,
    pub spatial: SpatialSection,
    pub report: ReportSection,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("config `{}`: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&src)?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.catalog);
        resolve(base, &mut cfg.output_dir);
        let i = &mut cfg.inputs;
        for p in [
            &mut i.area_table,
            &mut i.rules,
            &mut i.coordinates,
            &mut i.reference,
            &mut i.index,
            &mut i.outcome,
            &mut i.geometry,
        ] {
            resolve(base, p);
        }
        for p in i.microdata.values_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("geoses-out"))
    }

    pub fn delimiter(&self) -> Result<u8> {
        let c = self.inputs.delimiter.unwrap_or(',');
        u8::try_from(c).map_err(|_| CliError::usage(format!("delimiter `{c}` is not a single-byte character")))
    }

    pub fn record_format(&self) -> Result<RecordFormat> {
        let d = RecordFormat::default();
        Ok(RecordFormat {
            delimiter: self.delimiter()?,
            unit_column: self.inputs.unit_column.clone().unwrap_or(d.unit_column),
            weight_column: self.inputs.weight_column.clone().unwrap_or(d.weight_column),
        })
    }

    pub fn missing_policy(&self) -> Result<MissingPolicy> {
        self.inputs
            .missing_policy
            .as_deref()
            .map_or(Ok(MissingPolicy::default()), |s| s.parse().map_err(CliError::usage))
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            shift_constant: self.pipeline.shift_constant,
            variance_threshold: self.pipeline.variance_threshold,
            orientation_variable: self.pipeline.orientation_variable.clone(),
        }
    }

    pub fn gwr_config(&self) -> Result<GwrConfig> {
        Ok(GwrConfig {
            neighbor_count: self
                .spatial
                .neighbor_count
                .unwrap_or_else(|| self.scale.default_neighbor_count()),
            kernel: self.spatial.kernel.parse().map_err(CliError::usage)?,
        })
    }

    pub fn moran_config(&self) -> Result<MoranConfig> {
        if self.spatial.permutations > 0 && self.spatial.seed.is_none() {
            return Err(CliError::usage(
                "a seed is required when permutations > 0 (set spatial.seed or --seed)",
            ));
        }
        Ok(MoranConfig {
            permutations: self.spatial.permutations,
            seed: self.spatial.seed,
            alternative: self.spatial.alternative.parse().map_err(CliError::usage)?,
        })
    }

    pub fn id_property(&self) -> &str {
        self.inputs.id_property.as_deref().unwrap_or("unit_id")
    }

    /// Fails with a usage error naming the first referenced path that does
    /// not exist.
    pub fn check_paths_exist(&self) -> Result<()> {
        let i = &self.inputs;
        let named = [
            ("catalog", &self.catalog),
            ("area_table", &i.area_table),
            ("rules", &i.rules),
            ("coordinates", &i.coordinates),
            ("reference", &i.reference),
            ("index", &i.index),
            ("outcome", &i.outcome),
            ("geometry", &i.geometry),
        ];
        let all = named.into_iter().filter_map(|(n, p)| p.as_ref().map(|p| (n, p)));
        for (name, p) in all.into_iter().chain(i.microdata.iter().map(|(_, p)| ("microdata", p))) {
            if !p.exists() {
                return Err(CliError::usage(format!("{name} path `{}` does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn palette(&self) -> Result<[String; 3]> {
        let p = &self.report.palette;
        let ok = |s: &String| s.len() == 7 && s.starts_with('#') && s[1..].chars().all(|c| c.is_ascii_hexdigit());
        if p.len() != 3 || !p.iter().all(ok) {
            return Err(CliError::usage("report.palette must be three #rrggbb colors (for -1, 0 and +1)"));
        }
        Ok([p[0].clone(), p[1].clone(), p[2].clone()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_scale() {
        let mut c = RunConfig::default();
        assert_eq!(c.gwr_config().unwrap().neighbor_count, 53);
        c.scale = Scale::Intramunicipal;
        assert_eq!(c.gwr_config().unwrap().neighbor_count, 30);
        c.spatial.neighbor_count = Some(12);
        assert_eq!(c.gwr_config().unwrap().neighbor_count, 12);
    }

    #[test]
    fn seed_is_mandatory_with_permutations() {
        let mut c = RunConfig::default();
        assert!(c.moran_config().is_err());
        c.spatial.seed = Some(1);
        assert!(c.moran_config().is_ok());
        c.spatial.seed = None;
        c.spatial.permutations = 0;
        assert!(c.moran_config().is_ok());
    }

    #[test]
    fn toml_round_trip_and_unknown_fields() {
        let src = "scale = \"state\"\n[pipeline]\nshift_constant = 5.0\n[spatial]\nseed = 7\n";
        let c = RunConfig::from_toml_str(src).unwrap();
        assert_eq!(c.scale, Scale::State);
        assert_eq!(c.pipeline.shift_constant, 5.0);
        assert_eq!(c.pipeline.variance_threshold, 0.75);
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "[inputs]\narea_table = \"t.csv\"\n[inputs.microdata]\npersons = \"p.csv\"\n").unwrap();
        let c = RunConfig::load(&p).unwrap();
        assert_eq!(c.inputs.area_table.unwrap(), dir.path().join("t.csv"));
        assert_eq!(c.inputs.microdata["persons"], dir.path().join("p.csv"));
    }

    #[test]
    fn palette_is_validated() {
        let mut c = RunConfig::default();
        assert!(c.palette().is_ok());
        c.report.palette = vec!["red".into()];
        assert!(c.palette().is_err());
    }
}
