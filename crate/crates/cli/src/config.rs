use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use resfed_core::data::{
    generate_synthetic, load_csv, normalize, CsvSchema, NormalizationMethod, PartitionPolicy, SyntheticSpec, TestFile,
    TimeSeriesDataset,
};
use resfed_core::federation::AggregationPolicy;
use resfed_core::mdrs::{PrecisionPath, DEFAULT_DELTA};
use resfed_core::pipeline::DEFAULT_BETA;
use resfed_core::{Method, ReservoirSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Centralized,
    Incfed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeMode {
    #[default]
    Memory,
    /// Client messages go through `<output_dir>/messages`.
    Directory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AucRoc,
    AucPr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: Vec<PathBuf>,
    #[serde(default)]
    pub test: Vec<TestFile>,
    #[serde(default)]
    pub schema: CsvSchema,
}

fn one() -> usize {
    1
}
fn one_round() -> u32 {
    1
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_metrics() -> Vec<Metric> {
    vec![Metric::AucRoc, Metric::AucPr]
}

/// The run configuration file, one TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "one")]
    pub n_clients: usize,
    #[serde(default)]
    pub partition: PartitionPolicy,
    #[serde(default = "one_round")]
    pub rounds: u32,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub beta_per_client: bool,
    #[serde(default)]
    pub precision_path: PrecisionPath,
    #[serde(default)]
    pub normalization: NormalizationMethod,
    #[serde(default)]
    pub aggregation: AggregationPolicy,
    /// Clients that train but never deliver (failure drills).
    #[serde(default)]
    pub drop_clients: Vec<u32>,
    #[serde(default)]
    pub exchange: ExchangeMode,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    /// Reservoir keys; `n_input` defaults to the dataset's channel count.
    #[serde(default)]
    pub reservoir: toml::Table,
    #[serde(default)]
    pub data: Option<DataConfig>,
    /// Synthetic dataset keys, or `preset = "benchmark"` plus overrides.
    #[serde(default)]
    pub synthetic: Option<toml::Table>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses `key.path=value`; the value is read as a TOML literal and falls
/// back to a plain string.
pub fn parse_override(raw: &str) -> CliResult<(Vec<String>, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{raw}` is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("override key `{key}` is malformed")));
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_owned()));
    Ok((path, parsed))
}

pub fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> CliResult<()> {
    let (last, parents) = path.split_last().expect("non-empty key path");
    let mut cursor = table;
    for p in parents {
        let entry = cursor
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("`{p}` is not a table")))?;
    }
    cursor.insert(last.clone(), value);
    Ok(())
}

pub fn read_table(path: &Path) -> CliResult<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| config_err(format!("{}: {e}", path.display())))
}

/// A parsed configuration with relative paths anchored at the config file.
pub fn from_table(table: toml::Table, base: &Path) -> CliResult<RunConfig> {
    let mut config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| config_err(e.message().to_owned()))?;
    let anchor = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    anchor(&mut config.output_dir);
    if let Some(data) = &mut config.data {
        data.train.iter_mut().for_each(anchor);
        for t in &mut data.test {
            anchor(&mut t.data);
            if let Some(l) = &mut t.labels {
                anchor(l);
            }
        }
    }
    Ok(config)
}

pub fn load(path: &Path, overrides: &[String]) -> CliResult<RunConfig> {
    let mut table = read_table(path)?;
    for raw in overrides {
        let (key, value) = parse_override(raw)?;
        set_path(&mut table, &key, value)?;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    from_table(table, &base)
}

impl RunConfig {
    pub fn synthetic_spec(&self) -> CliResult<Option<SyntheticSpec>> {
        let Some(table) = &self.synthetic else {
            return Ok(None);
        };
        let mut table = table.clone();
        let mut merged = match table.remove("preset") {
            None => toml::Table::new(),
            Some(toml::Value::String(p)) if p == "benchmark" => {
                match toml::Value::try_from(SyntheticSpec::benchmark(0)).map_err(|e| config_err(e.to_string()))? {
                    toml::Value::Table(t) => t,
                    _ => unreachable!("a struct serializes to a table"),
                }
            }
            Some(other) => return Err(config_err(format!("unknown synthetic preset {other}"))),
        };
        merged.extend(table);
        let spec = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(format!("synthetic: {}", e.message())))?;
        Ok(Some(spec))
    }

    /// Checks settings that do not depend on the data.
    pub fn validate(&self) -> CliResult<()> {
        if self.data.is_some() == self.synthetic.is_some() {
            return Err(config_err("exactly one of [data] or [synthetic] must be given"));
        }
        if self.n_clients == 0 {
            return Err(config_err("n_clients must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(config_err("rounds must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(config_err(format!("delta {} must be positive", self.delta)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(config_err(format!("beta {} must be positive", self.beta)));
        }
        if self.metrics.is_empty() {
            return Err(config_err("metrics must name at least one metric"));
        }
        if self.mode == Mode::Centralized {
            if self.n_clients != 1 {
                log::warn!("n_clients = {} is ignored in centralized mode", self.n_clients);
            }
            if !self.drop_clients.is_empty() {
                log::warn!("drop_clients is ignored in centralized mode");
            }
        }
        if self.mode == Mode::Incfed && self.precision_path == PrecisionPath::Online {
            log::warn!("precision_path = online only applies to centralized training");
        }
        if self.method == Method::Mdrs && self.beta_per_client {
            log::warn!("beta_per_client only applies to esn_sre");
        }
        Ok(())
    }

    pub fn reservoir_spec(&self, n_input: usize) -> CliResult<ReservoirSpec> {
        let mut table = self.reservoir.clone();
        match table.get("n_input").and_then(toml::Value::as_integer) {
            Some(n) if n as usize != n_input => {
                return Err(config_err(format!(
                    "reservoir.n_input = {n} but the dataset has {n_input} channels"
                )))
            }
            _ => {
                table.insert("n_input".into(), toml::Value::Integer(n_input as i64));
            }
        }
        let spec: ReservoirSpec = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(format!("reservoir: {}", e.message())))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Loads or generates the dataset and normalizes it.
    pub fn dataset(&self) -> CliResult<TimeSeriesDataset> {
        let raw = match (&self.data, self.synthetic_spec()?) {
            (Some(d), None) => load_csv(&d.train, &d.test, &d.schema)?,
            (None, Some(s)) => generate_synthetic(&s)?,
            _ => return Err(config_err("exactly one of [data] or [synthetic] must be given")),
        };
        Ok(normalize(&raw, self.normalization)?)
    }

    /// SHA-256 over the canonical JSON of every setting that affects
    /// results. The output directory is left out.
    pub fn fingerprint(&self, spec: &ReservoirSpec) -> CliResult<String> {
        let mut value = serde_json::to_value(self).map_err(|e| config_err(e.to_string()))?;
        let obj = value.as_object_mut().expect("config serializes to an object");
        obj.remove("output_dir");
        obj.remove("exchange");
        obj.insert(
            "reservoir".into(),
            serde_json::to_value(spec).map_err(|e| config_err(e.to_string()))?,
        );
        if let Some(s) = self.synthetic_spec()? {
            obj.insert(
                "synthetic".into(),
                serde_json::to_value(s).map_err(|e| config_err(e.to_string()))?,
            );
        }
        let canonical = serde_json::to_string(&value).map_err(|e| config_err(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }
}
