//! Scenario configs and runners that regenerate each figure as tables, plot
//! descriptions and fit reports.
//!
//! A config is a JSON object with `"schema": "qdspin/v1"`, a `"scenario"`
//! name, an optional `"seed"` and `"description"`, and the scenario's own
//! keys. Unknown keys are rejected and errors point at the offending key as a
//! JSON pointer.

mod rates;
mod scenarios;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use rates::{RateRow, RateTable, RateTableError, SyntheticRates};
pub use scenarios::{
    beat_round_trip, derive_seed, ose_round_trip, BeatFit, BeatSweep, BeatWindow, BeatsConfig, Fig3Config, Fig4Config, Fig5bConfig, Fig5cConfig, FitScenarioConfig, FssMarker,
    OseFitConfig, OverlayConfig, FixedShapeConfig, OseModelConfig, RateSource, SpectrumScenarioConfig, Sweep, SweepQuantity, FIT_MODELS, VERIFY_TOLERANCE,
};

pub const SCHEMA: &str = "qdspin/v1";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error at `{pointer}`: {message}")]
    Config { pointer: String, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

impl ExperimentError {
    pub fn config(pointer: impl Into<String>, message: impl ToString) -> Self {
        ExperimentError::Config {
            pointer: pointer.into(),
            message: message.to_string(),
        }
    }

    pub fn numerical(e: impl ToString) -> Self {
        ExperimentError::Numerical(e.to_string())
    }

    /// Process exit code for this failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config { .. } => 2,
            ExperimentError::Numerical(_) => 3,
            ExperimentError::Io { .. } => 4,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            ExperimentError::Config { .. } => "config",
            ExperimentError::Numerical(_) => "numerical",
            ExperimentError::Io { .. } => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioConfig {
    Fig3(Fig3Config),
    Fig4(Fig4Config),
    Fig5b(Fig5bConfig),
    Fig5c(Fig5cConfig),
    Beats(BeatsConfig),
    Spectrum(SpectrumScenarioConfig),
    Fit(FitScenarioConfig),
}

pub const SCENARIOS: [&str; 7] = ["fig3", "fig4", "fig5b", "fig5c", "beats", "spectrum", "fit"];

/// A parsed config with its common keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub seed: Option<u64>,
    pub description: Option<String>,
    /// SHA-256 of the config text.
    pub hash: String,
}

impl ScenarioConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioConfig::Fig3(_) => "fig3",
            ScenarioConfig::Fig4(_) => "fig4",
            ScenarioConfig::Fig5b(_) => "fig5b",
            ScenarioConfig::Fig5c(_) => "fig5c",
            ScenarioConfig::Beats(_) => "beats",
            ScenarioConfig::Spectrum(_) => "spectrum",
            ScenarioConfig::Fit(_) => "fit",
        }
    }
}

fn escape_pointer(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out += &format!("/{index}"),
            Segment::Map { key } => out += &format!("/{}", escape_pointer(key)),
            Segment::Enum { variant } => out += &format!("/{}", escape_pointer(variant)),
            Segment::Unknown => {}
        }
    }
    out
}

/// Deserializes `value` and reports failures as a JSON pointer below `base`.
pub(crate) fn from_value<T: DeserializeOwned>(value: Value, base: &str) -> Result<T, ExperimentError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let mut pointer = format!("{base}{}", pointer_of(e.path()));
        let message = e.inner().to_string();
        // a missing key is reported at its parent; point at the key itself
        if let Some(rest) = message.strip_prefix("missing field `") {
            if let Some(field) = rest.split('`').next() {
                pointer += &format!("/{}", escape_pointer(field));
            }
        }
        if let Some(rest) = message.strip_prefix("unknown field `") {
            if let Some(field) = rest.split('`').next() {
                let leaf = format!("/{}", escape_pointer(field));
                if !pointer.ends_with(&leaf) {
                    pointer += &leaf;
                }
            }
        }
        ExperimentError::config(pointer, message)
    })
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<Config, ExperimentError> {
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    let value: Value = serde_json::from_str(text)
        .map_err(|e| ExperimentError::config("", format!("invalid JSON at line {} column {}: {e}", e.line(), e.column())))?;
    let Value::Object(mut map) = value else {
        return Err(ExperimentError::config("", "config must be a JSON object"));
    };
    match map.remove("schema") {
        Some(Value::String(s)) if s == SCHEMA => {}
        Some(other) => return Err(ExperimentError::config("/schema", format!("expected \"{SCHEMA}\", got {other}"))),
        None => return Err(ExperimentError::config("/schema", "missing field `schema`")),
    }
    let scenario = match map.remove("scenario") {
        Some(Value::String(s)) => s,
        Some(other) => return Err(ExperimentError::config("/scenario", format!("expected a string, got {other}"))),
        None => return Err(ExperimentError::config("/scenario", "missing field `scenario`")),
    };
    let seed = match map.remove("seed") {
        None => None,
        Some(v) => Some(from_value::<u64>(v, "/seed")?),
    };
    let description = match map.remove("description") {
        None => None,
        Some(v) => Some(from_value::<String>(v, "/description")?),
    };
    let rest = Value::Object(map);
    let scenario = match scenario.as_str() {
        "fig3" => ScenarioConfig::Fig3(from_value(rest, "")?),
        "fig4" => ScenarioConfig::Fig4(from_value(rest, "")?),
        "fig5b" => ScenarioConfig::Fig5b(from_value(rest, "")?),
        "fig5c" => ScenarioConfig::Fig5c(from_value(rest, "")?),
        "beats" => ScenarioConfig::Beats(from_value(rest, "")?),
        "spectrum" => ScenarioConfig::Spectrum(from_value(rest, "")?),
        "fit" => ScenarioConfig::Fit(from_value(rest, "")?),
        other => {
            return Err(ExperimentError::config(
                "/scenario",
                format!("unknown scenario `{other}` (expected one of {})", SCENARIOS.join(", ")),
            ))
        }
    };
    let config = Config {
        scenario,
        seed,
        description,
        hash,
    };
    scenarios::validate(&config.scenario)?;
    Ok(config)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's seed.
    pub seed: Option<u64>,
    /// Re-check closed-form points against the dynamics engine.
    pub verify: bool,
    /// Directory that relative paths in the config resolve against.
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Bool(bool),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

/// A named table whose every column carries a unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&str, &str)]) -> Self {
        Table {
            name: name.into(),
            columns: columns
                .iter()
                .map(|(n, u)| Column {
                    name: (*n).into(),
                    unit: (*u).into(),
                })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.columns.iter().position(|c| c.name == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    /// Numeric values of a column; non-numeric cells become NaN.
    pub fn numbers(&self, name: &str) -> Option<Vec<f64>> {
        Some(
            self.column(name)?
                .into_iter()
                .map(|c| match c {
                    Cell::Num(v) => *v,
                    Cell::Bool(b) => f64::from(u8::from(*b)),
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }

    pub fn headers(&self) -> Vec<String> {
        self.columns.iter().map(|c| format!("{} [{}]", c.name, c.unit)).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.headers())?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesStyle {
    Line,
    Markers,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub label: String,
    pub style: SeriesStyle,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub yerr: Option<Vec<f64>>,
}

impl Series {
    pub fn line(label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            style: SeriesStyle::Line,
            x,
            y,
            yerr: None,
        }
    }

    pub fn markers(label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            style: SeriesStyle::Markers,
            x,
            y,
            yerr: None,
        }
    }
}

/// Renderer-independent description of one figure panel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutput {
    pub scenario: &'static str,
    /// The first table is the primary output.
    pub tables: Vec<Table>,
    pub plot: PlotSpec,
    pub report: Value,
    pub seed: u64,
    pub convention: Option<&'static str>,
}

/// Provenance written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub config_sha256: String,
    pub seed: u64,
    pub verify: bool,
    pub ose_sign_convention: Option<String>,
    pub outputs: Vec<String>,
    pub report: Value,
}

impl RunMeta {
    pub fn new(config: &Config, opts: &RunOptions, out: &ScenarioOutput, outputs: Vec<String>) -> Self {
        RunMeta {
            tool: "qdspin".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scenario: out.scenario.into(),
            config_sha256: config.hash.clone(),
            seed: out.seed,
            verify: opts.verify,
            ose_sign_convention: out.convention.map(String::from),
            outputs,
            report: out.report.clone(),
        }
    }
}

/// Runs a parsed scenario.
pub fn run(config: &Config, opts: &RunOptions) -> Result<ScenarioOutput, ExperimentError> {
    scenarios::run(&config.scenario, opts.seed.or(config.seed), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_and_scenario_are_checked() {
        let err = parse_config(r#"{"scenario": "fig3"}"#).unwrap_err();
        assert!(matches!(&err, ExperimentError::Config { pointer, .. } if pointer == "/schema"));
        let err = parse_config(r#"{"schema": "qdspin/v0", "scenario": "fig3"}"#).unwrap_err();
        assert!(matches!(&err, ExperimentError::Config { pointer, .. } if pointer == "/schema"));
        let err = parse_config(r#"{"schema": "qdspin/v1", "scenario": "fig9"}"#).unwrap_err();
        assert!(matches!(&err, ExperimentError::Config { pointer, .. } if pointer == "/scenario"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_and_unknown_keys_point_at_the_key() {
        let err = parse_config(r#"{"schema": "qdspin/v1", "scenario": "fig3", "sweep": {"from": "0 ueV", "to": "40 ueV", "points": 5}}"#)
            .unwrap_err();
        assert!(matches!(&err, ExperimentError::Config { pointer, .. } if pointer == "/gamma"), "{err}");
        let err = parse_config(
            r#"{"schema": "qdspin/v1", "scenario": "fig3", "gamma": "0.021 1/ps",
                "sweep": {"from": "0 ueV", "to": "40 ueV", "points": 5, "step": 1}}"#,
        )
        .unwrap_err();
        assert!(matches!(&err, ExperimentError::Config { pointer, .. } if pointer == "/sweep/step"), "{err}");
        let err = parse_config(
            r#"{"schema": "qdspin/v1", "scenario": "fig3", "gamma": "0.021",
                "sweep": {"from": "0 ueV", "to": "40 ueV", "points": 5}}"#,
        )
        .unwrap_err();
        assert!(matches!(&err, ExperimentError::Config { pointer, .. } if pointer == "/gamma"), "{err}");
    }

    #[test]
    fn table_csv_has_units() {
        let mut t = Table::new("t", &[("fss", "ueV"), ("fidelity", "1"), ("flag", "bool")]);
        t.push(vec![2.01.into(), 0.5.into(), true.into()]);
        assert_eq!(t.to_csv_string(), "fss [ueV],fidelity [1],flag [bool]\n2.01,0.5,true\n");
    }
}
