//! Scenario files: the reproducibility unit for `simulate` and `sweep`.

use std::path::Path;

use linecover::harness::DEFAULT_TOL;
use linecover::{ChainVariant, DensityField, DynamicParams, InitMode, Law, MovementRule};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Init {
    Mode(InitMode),
    Positions(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stop {
    pub tol: f64,
    pub max_rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicExtras {
    #[serde(default)]
    pub big_u: Option<usize>,
    pub variant: ChainVariant,
    pub rule: MovementRule,
}

impl Default for DynamicExtras {
    fn default() -> Self {
        let p = DynamicParams::default();
        Self { big_u: p.big_u, variant: p.variant, rule: p.rule }
    }
}

impl From<DynamicExtras> for DynamicParams {
    fn from(d: DynamicExtras) -> Self {
        DynamicParams { big_u: d.big_u, variant: d.variant, rule: d.rule }
    }
}

/// Field order here is the canonical serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub law: Law,
    pub density: String,
    pub n: usize,
    pub init: Init,
    #[serde(default)]
    pub seed: u64,
    pub stop: Stop,
    #[serde(default)]
    pub dynamic: DynamicExtras,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            law: Law::Static,
            density: "uniform".into(),
            n: 5,
            init: Init::Mode(InitMode::RandomUniformOrderStatistics),
            seed: 0,
            stop: Stop { tol: DEFAULT_TOL, max_rounds: 1_000_000 },
            dynamic: DynamicExtras::default(),
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(format!("scenario: {e}")))
    }

    /// Pretty JSON with a trailing newline; stable under parse/serialize.
    pub fn canonical(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let min = match self.law {
            Law::Static => 2,
            Law::Dynamic => 3,
        };
        if self.n < min {
            return Err(CliError::Usage(format!("{} law needs n >= {min}, got {}", self.law, self.n)));
        }
        if let Init::Positions(x) = &self.init {
            if x.len() != self.n {
                return Err(CliError::Usage(format!("{} positions given for n = {}", x.len(), self.n)));
            }
        }
        if self.stop.tol.is_nan() || self.stop.tol <= 0.0 {
            return Err(CliError::Usage(format!("tol must be > 0, got {}", self.stop.tol)));
        }
        if self.stop.max_rounds < 1 {
            return Err(CliError::Usage("max_rounds must be >= 1".into()));
        }
        if let Some(u) = self.dynamic.big_u {
            if u < 3 {
                return Err(CliError::Usage(format!("big_u must be >= 3, got {u}")));
            }
        }
        Ok(())
    }
}

/// A preset name, or a path to a density JSON file.
pub fn load_density(spec: &str) -> Result<DensityField, CliError> {
    if let Some(f) = DensityField::preset(spec) {
        return Ok(f);
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "density `{spec}` is neither a preset ({}) nor a readable file",
            DensityField::PRESETS.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{spec}: {e}")))?;
    DensityField::from_json(&text).map_err(|e| match e {
        linecover::CoverageError::Parse(m) => CliError::Parse(format!("{spec}: {m}")),
        other => CliError::Core(other),
    })
}
