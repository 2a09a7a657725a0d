//! Argument parsing. Flags override the matching config-file fields.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{RunConfig, Scale};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "geoses",
    version,
    about = "Socioeconomic composite index for small areas, with spatial validation and HTML maps",
    after_help = "Exit codes: 0 success, 2 usage or configuration error, 3 unreadable or malformed input, \
                  4 data requirement violated, 5 numerical failure."
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all outputs.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Variable catalog (TOML); the bundled catalog when absent.
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    /// national, state or intramunicipal.
    #[arg(long, global = true)]
    pub scale: Option<Scale>,
    /// Field delimiter of input tables.
    #[arg(long, global = true)]
    pub delimiter: Option<char>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate inputs and build the index.
    BuildIndex(InputArgs),
    /// Fit OLS and GWR of an outcome on the index and its dimensions.
    Validate(ValidateArgs),
    /// Write a standalone HTML map of the index export.
    RenderMap(RenderArgs),
    /// Print pipeline internals as JSON.
    DumpDiagnostics(DiagnosticsArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Pre-aggregated table `unit_id,x,y,<variables>`.
    #[arg(long)]
    pub area_table: Option<PathBuf>,
    /// Microdata file for a universe, as `universe=path`. Repeatable.
    #[arg(long, value_parser = parse_universe)]
    pub microdata: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// `unit_id,x,y` table.
    #[arg(long)]
    pub coordinates: Option<PathBuf>,
    /// drop_unit or impute_region_mean.
    #[arg(long)]
    pub missing_policy: Option<String>,
    /// `unit_id,<columns>` to correlate against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub shift_constant: Option<f64>,
    #[arg(long)]
    pub variance_threshold: Option<f64>,
    /// Variable the index must correlate non-negatively with.
    #[arg(long)]
    pub orientation_variable: Option<String>,
}

#[derive(Debug, Args)]
pub struct SpatialArgs {
    /// Index export; defaults to `<output-dir>/index.csv`.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// GeoJSON FeatureCollection or adjacency list.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// Feature property holding the unit id.
    #[arg(long)]
    pub id_property: Option<String>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub spatial: SpatialArgs,
    /// `unit_id,<value>` outcome table.
    #[arg(long)]
    pub outcome: Option<PathBuf>,
    /// `unit_id,x,y` regression coordinates; polygon centroids otherwise.
    #[arg(long)]
    pub coordinates: Option<PathBuf>,
    #[arg(long)]
    pub neighbor_count: Option<usize>,
    /// adaptive_bisquare or uniform.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// one_sided or two_sided.
    #[arg(long)]
    pub alternative: Option<String>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub spatial: SpatialArgs,
    /// HTML file to write; defaults to `<output-dir>/map.html`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub title: Option<String>,
    /// Three colors for -1, 0 and +1, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub palette: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct DiagnosticsArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Adds contiguity statistics.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long)]
    pub id_property: Option<String>,
}

fn parse_universe(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (u, p) = s.split_once('=').ok_or("expected universe=path")?;
    Ok((u.to_owned(), PathBuf::from(p)))
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl CommonArgs {
    pub fn base_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        set_opt(&mut cfg.output_dir, self.output_dir.clone());
        set_opt(&mut cfg.catalog, self.catalog.clone());
        set(&mut cfg.scale, self.scale);
        set_opt(&mut cfg.inputs.delimiter, self.delimiter);
        Ok(cfg)
    }
}

impl InputArgs {
    fn apply(self, cfg: &mut RunConfig) {
        let i = &mut cfg.inputs;
        set_opt(&mut i.area_table, self.area_table);
        if !self.microdata.is_empty() {
            i.microdata = self.microdata.into_iter().collect();
        }
        set_opt(&mut i.rules, self.rules);
        set_opt(&mut i.coordinates, self.coordinates);
        set_opt(&mut i.missing_policy, self.missing_policy);
        set_opt(&mut i.reference, self.reference);
        set(&mut cfg.pipeline.shift_constant, self.shift_constant);
        set(&mut cfg.pipeline.variance_threshold, self.variance_threshold);
        set_opt(&mut cfg.pipeline.orientation_variable, self.orientation_variable);
    }
}

impl SpatialArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set_opt(&mut cfg.inputs.index, self.index);
        set_opt(&mut cfg.inputs.geometry, self.geometry);
        set_opt(&mut cfg.inputs.id_property, self.id_property);
    }
}

/// Parses nothing itself; runs an already-parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = cli.common.base_config()?;
    match cli.command {
        Command::BuildIndex(a) => {
            a.apply(&mut cfg);
            let out = commands::cmd_build_index(&cfg)?;
            eprintln!(
                "built index for {} units; outputs in {}",
                out.result.unit_ids.len(),
                out.output_dir.display()
            );
        }
        Command::Validate(a) => {
            a.spatial.apply(&mut cfg);
            set_opt(&mut cfg.inputs.outcome, a.outcome);
            set_opt(&mut cfg.inputs.coordinates, a.coordinates);
            set_opt(&mut cfg.spatial.neighbor_count, a.neighbor_count);
            set(&mut cfg.spatial.kernel, a.kernel);
            set(&mut cfg.spatial.permutations, a.permutations);
            set_opt(&mut cfg.spatial.seed, a.seed);
            set(&mut cfg.spatial.alternative, a.alternative);
            let out = commands::cmd_validate(&cfg)?;
            if let Some(best) = out.gwr.iter().find(|r| r.best) {
                eprintln!("best GWR fit: {}", best.indicator);
            }
        }
        Command::RenderMap(a) => {
            a.spatial.apply(&mut cfg);
            set(&mut cfg.report.title, a.title);
            set(&mut cfg.report.palette, a.palette);
            let out = commands::cmd_render_map(&cfg, a.output.as_deref())?;
            eprintln!("wrote {}", out.html_path.display());
        }
        Command::DumpDiagnostics(a) => {
            a.inputs.apply(&mut cfg);
            set_opt(&mut cfg.inputs.geometry, a.geometry);
            set_opt(&mut cfg.inputs.id_property, a.id_property);
            let v = commands::cmd_dump_diagnostics(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&v).map_err(|e| CliError::usage(e.to_string()))?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "scale = \"state\"\n[spatial]\nseed = 1\npermutations = 9\n").unwrap();
        let cli = Cli::try_parse_from([
            "geoses",
            "--config",
            p.to_str().unwrap(),
            "--scale",
            "intramunicipal",
            "validate",
            "--seed",
            "5",
        ])
        .unwrap();
        let mut cfg = cli.common.base_config().unwrap();
        assert_eq!(cfg.scale, Scale::Intramunicipal);
        if let Command::Validate(a) = cli.command {
            set_opt(&mut cfg.spatial.seed, a.seed);
        }
        assert_eq!(cfg.spatial.seed, Some(5));
        assert_eq!(cfg.spatial.permutations, 9);
    }

    #[test]
    fn microdata_flag_syntax() {
        assert_eq!(parse_universe("persons=a.csv").unwrap().0, "persons");
        assert!(parse_universe("a.csv").is_err());
    }
}
