//! The run file: dataset source, output location, training settings and
//! per-command knobs, with flag overrides applied before typed decoding.

use std::path::{Path, PathBuf};

use matldc::dataio::{CsvSchema, Protocol, SynthConfig};
use matldc::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::exit::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunFile {
    /// Artifact directory.
    pub output: PathBuf,
    pub protocol: Protocol,
    pub data: DataSource,
    pub train: TrainConfig,
    pub fold: FoldSelection,
    pub noise_sweep: NoiseSweep,
    pub k_sweep: KSweep,
}

impl Default for RunFile {
    fn default() -> Self {
        Self {
            output: PathBuf::from("matldc-out"),
            protocol: Protocol::SingleSession,
            data: DataSource::default(),
            train: TrainConfig::default(),
            fold: FoldSelection::default(),
            noise_sweep: NoiseSweep::default(),
            k_sweep: KSweep::default(),
        }
    }
}

/// Exactly one of `csv` and `synth` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSource {
    /// Feature CSV, relative to the run file's directory.
    pub csv: Option<PathBuf>,
    pub label_column: String,
    pub subject_column: String,
    /// Empty string: the file has a single session and no session column.
    pub session_column: String,
    pub synth: Option<SynthConfig>,
}

impl Default for DataSource {
    fn default() -> Self {
        let s = CsvSchema::default();
        Self {
            csv: None,
            label_column: s.label,
            subject_column: s.subject,
            session_column: s.session.unwrap_or_default(),
            synth: None,
        }
    }
}

impl DataSource {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            label: self.label_column.clone(),
            subject: self.subject_column.clone(),
            session: (!self.session_column.is_empty()).then(|| self.session_column.clone()),
        }
    }
}

/// Held-out subject for `train` and `eval`, by the id used in the data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldSelection {
    /// `None` holds out the first subject.
    pub target_subject: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSweep {
    pub etas: Vec<f64>,
}

impl Default for NoiseSweep {
    fn default() -> Self {
        Self { etas: vec![0.0, 0.05, 0.1, 0.2, 0.3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KSweep {
    pub ks: Vec<usize>,
}

impl Default for KSweep {
    fn default() -> Self {
        Self { ks: vec![1, 2, 3, 4, 5, 6] }
    }
}

/// A `path.to.key=value` override; the value is parsed as TOML and falls
/// back to a plain string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: toml::Value,
}

impl Override {
    pub fn parse(s: &str) -> Result<Self, String> {
        let (k, v) = s.split_once('=').ok_or_else(|| format!("`{s}` is not key=value"))?;
        let path: Vec<String> = k.trim().split('.').map(str::to_string).collect();
        if path.iter().any(String::is_empty) {
            return Err(format!("`{k}` is not a valid key path"));
        }
        Ok(Self { path, value: parse_value(v.trim()) })
    }

    pub fn new(path: &str, value: toml::Value) -> Self {
        Self { path: path.split('.').map(str::to_string).collect(), value }
    }
}

fn parse_value(v: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()))
}

fn apply(table: &mut toml::Table, o: &Override) -> Result<(), CliError> {
    let key = o.path.join(".");
    let (last, parents) = o.path.split_last().expect("non-empty path");
    let mut t = table;
    for p in parents {
        let entry = t.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{key}`: `{p}` is not a table")))?;
    }
    t.insert(last.clone(), o.value.clone());
    Ok(())
}

/// Reads, overrides, decodes and validates a run file. Relative data paths
/// are resolved against the file's directory.
pub fn load(path: Option<&Path>, overrides: &[Override]) -> Result<RunFile, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply(&mut table, o)?;
    }
    let mut run: RunFile = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    if let (Some(csv), Some(dir)) = (run.data.csv.as_mut(), path.and_then(Path::parent)) {
        if csv.is_relative() {
            *csv = dir.join(&*csv);
        }
    }
    Ok(run)
}

impl RunFile {
    /// Checks every section; messages name the offending key.
    pub fn validate(&self, needs_data: bool) -> Result<(), CliError> {
        self.train.validate().map_err(|e| prefixed("train", e))?;
        if let Some(s) = &self.data.synth {
            s.validate().map_err(|e| prefixed("data.synth", e))?;
        }
        if needs_data {
            match (&self.data.csv, &self.data.synth) {
                (Some(_), Some(_)) => return Err(CliError::Config("`data`: set only one of `csv` and `synth`".into())),
                (None, None) => return Err(CliError::Config("`data`: set `csv` or a `[data.synth]` table".into())),
                _ => {}
            }
        }
        for &eta in &self.noise_sweep.etas {
            if !(0.0..1.0).contains(&eta) {
                return Err(CliError::Config(format!("`noise_sweep.etas`: {eta} is outside [0, 1)")));
            }
        }
        if self.k_sweep.ks.contains(&0) {
            return Err(CliError::Config("`k_sweep.ks`: K must be at least 1".into()));
        }
        Ok(())
    }
}

fn prefixed(section: &str, e: matldc::Error) -> CliError {
    match e {
        matldc::Error::Config { key, msg } => CliError::Config(format!("`{section}.{key}`: {msg}")),
        other => CliError::Config(format!("`{section}`: {other}")),
    }
}
