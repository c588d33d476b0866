//! Optional TOML configuration. Every key mirrors a command-line flag and is
//! used only when that flag is absent.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub equiv: EquivSection,
    #[serde(default)]
    pub quantize: QuantizeSection,
    #[serde(default)]
    pub inspect: InspectSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub episodes: Option<usize>,
    pub mode: Option<String>,
    pub compare: Option<String>,
    pub split: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivSection {
    pub d: Option<usize>,
    pub h: Option<usize>,
    pub t: Option<usize>,
    pub w: Option<usize>,
    pub layers: Option<usize>,
    pub scaled: Option<bool>,
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizeSection {
    pub weight_bits: Option<u32>,
    pub vector_bits: Option<u32>,
    pub activation_bits: Option<u32>,
    pub cache_bits: Option<u32>,
    pub trace_bits: Option<u32>,
    pub prob_exp: Option<i32>,
    pub headroom: Option<f64>,
    pub calibration_episodes: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InspectSection {
    pub tokens: Option<usize>,
    pub mode: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub d: Option<Vec<usize>>,
    pub t: Option<Vec<usize>>,
    pub w: Option<Vec<usize>>,
    pub reps: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
