use serde::Serialize;
use serde_json::Value;

/// Machine-readable record of one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub engine_version: String,
    pub config_digest: Option<String>,
    pub checkpoint_digest: Option<String>,
    pub seed: u64,
    pub episodes: usize,
    pub timing: Timing,
    pub results: Value,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub total_ms: f64,
    /// Per-step figures where they apply.
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub detail: serde_json::Map<String, Value>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            engine_version: env!("CARGO_PKG_VERSION").into(),
            config_digest: None,
            checkpoint_digest: None,
            seed,
            episodes: 0,
            timing: Timing::default(),
            results: Value::Null,
        }
    }
}
