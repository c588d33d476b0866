//! Episode execution and accuracy aggregation.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::Dataset;
use super::episode::{sample_episode, Episode};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::quantized::{IntDecoder, QuantModel};
use crate::reference::{AttentionKind, FloatDecoder};

/// Execution path used for an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Float weights, tensor KV-cache.
    Float,
    /// Float weights, plastic KV-cache.
    Plastic,
    /// Integer weights, tensor KV-cache.
    Quant,
    /// Integer weights, plastic KV-cache.
    QuantPlastic,
}

impl EvalMode {
    pub const ALL: [EvalMode; 4] = [
        EvalMode::Float,
        EvalMode::Plastic,
        EvalMode::Quant,
        EvalMode::QuantPlastic,
    ];

    pub fn attention(self) -> AttentionKind {
        match self {
            EvalMode::Float | EvalMode::Quant => AttentionKind::Reference,
            EvalMode::Plastic | EvalMode::QuantPlastic => AttentionKind::Plastic,
        }
    }

    pub fn is_integer(self) -> bool {
        matches!(self, EvalMode::Quant | EvalMode::QuantPlastic)
    }

    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Float => "float",
            EvalMode::Plastic => "plastic",
            EvalMode::Quant => "quant",
            EvalMode::QuantPlastic => "quant-plastic",
        }
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EvalMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeOutcome {
    pub predicted: usize,
    pub label: usize,
    pub scores: Vec<f64>,
}

impl EpisodeOutcome {
    pub fn correct(&self) -> bool {
        self.predicted == self.label
    }
}

/// Anything that classifies the query of an episode.
pub trait Predictor: Sync {
    fn predict(&self, episode: &Episode) -> Result<EpisodeOutcome>;
}

/// A model bound to an execution path.
#[derive(Debug, Clone, Copy)]
pub enum Engine<'a> {
    Float(&'a Model, AttentionKind),
    Int(&'a QuantModel, AttentionKind),
}

impl<'a> Engine<'a> {
    pub fn config(&self) -> &'a ModelConfig {
        match self {
            Engine::Float(m, _) => &m.config,
            Engine::Int(m, _) => m.config(),
        }
    }
}

impl Predictor for Engine<'_> {
    fn predict(&self, episode: &Episode) -> Result<EpisodeOutcome> {
        run_episode(self, episode)
    }
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Feeds the support tokens and the query one at a time and classifies the
/// query from the scores at the last position.
pub fn run_episode(engine: &Engine<'_>, episode: &Episode) -> Result<EpisodeOutcome> {
    let c = engine.config();
    if c.classes != episode.classes {
        return Err(Error::Config(format!(
            "model has {} classes, episode has {}",
            c.classes, episode.classes
        )));
    }
    if c.pixels != episode.query.len() {
        return Err(Error::Config(format!(
            "model expects {} pixels, episode images have {}",
            c.pixels,
            episode.query.len()
        )));
    }
    if episode.len() > c.max_seq_len {
        return Err(Error::Config(format!(
            "episode of {} tokens exceeds max_seq_len {}",
            episode.len(),
            c.max_seq_len
        )));
    }
    let inputs = episode.inputs();
    let (last, support) = inputs.split_last().expect("episode has a query");
    let scores = match *engine {
        Engine::Float(m, kind) => {
            let mut dec = FloatDecoder::new(m, kind)?;
            for tok in support {
                dec.step(tok)?;
            }
            dec.step_scores(last)?
        }
        Engine::Int(m, kind) => {
            let mut dec = IntDecoder::new(m, kind)?;
            for tok in support {
                dec.step(tok)?;
            }
            dec.step_scores(last)?
        }
    };
    Ok(EpisodeOutcome {
        predicted: argmax(&scores),
        label: episode.query_label,
        scores,
    })
}

/// Wilson score interval for `successes` out of `trials` at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Stable per-purpose seed: the first 8 bytes of SHA-256 over the parts.
pub fn derive_seed(base: u64, purpose: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    h.update(index.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("eight bytes"))
}

/// Seed of episode `index` in the stream rooted at `seed`.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, "episode", index as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub ci95: (f64, f64),
    #[serde(skip)]
    pub outcomes: Vec<EpisodeOutcome>,
}

impl EvalReport {
    pub fn from_outcomes(outcomes: Vec<EpisodeOutcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::Eval("no episodes evaluated".into()));
        }
        let correct = outcomes.iter().filter(|o| o.correct()).count();
        let n = outcomes.len();
        Ok(Self {
            episodes: n,
            correct,
            accuracy: correct as f64 / n as f64,
            ci95: wilson_interval(correct, n),
            outcomes,
        })
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.outcomes.iter().map(|o| o.predicted).collect()
    }
}

/// Evaluates `count` seeded episodes in parallel. Episode `i` depends only
/// on `(seed, i)`, so results do not depend on the thread count.
pub fn evaluate(
    predictor: &dyn Predictor,
    dataset: &dyn Dataset,
    classes: usize,
    shots: usize,
    count: usize,
    seed: u64,
) -> Result<EvalReport> {
    if count == 0 {
        return Err(Error::Eval("episode count must be at least 1".into()));
    }
    let outcomes = (0..count)
        .into_par_iter()
        .map(|i| {
            let ep = sample_episode(dataset, classes, shots, episode_seed(seed, i))?;
            predictor.predict(&ep)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_outcomes(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::dataset::{synthetic, SyntheticSpec};

    struct Oracle;
    impl Predictor for Oracle {
        fn predict(&self, ep: &Episode) -> Result<EpisodeOutcome> {
            Ok(EpisodeOutcome {
                predicted: ep.query_label,
                label: ep.query_label,
                scores: vec![],
            })
        }
    }

    #[test]
    fn all_correct_stub() {
        let ds = synthetic(&SyntheticSpec::default()).unwrap();
        let r = evaluate(&Oracle, &ds, 5, 1, 50, 0).unwrap();
        assert_eq!((r.correct, r.accuracy), (50, 1.0));
        assert!(r.ci95.0 > 0.9 && r.ci95.1 == 1.0);
        assert!(evaluate(&Oracle, &ds, 5, 1, 0, 0).is_err());
    }

    #[test]
    fn wilson_known_value() {
        // 20 of 100: (0.1333, 0.2888)
        let (lo, hi) = wilson_interval(20, 100);
        assert!((lo - 0.13330).abs() < 1e-4 && (hi - 0.28876).abs() < 1e-4);
    }

    #[test]
    fn modes_parse() {
        for m in EvalMode::ALL {
            assert_eq!(m.name().parse::<EvalMode>().unwrap(), m);
        }
        assert!("fast".parse::<EvalMode>().is_err());
        assert_eq!(argmax(&[0.1, 3.0, 3.0]), 1);
    }

    #[test]
    fn seeds_differ_by_purpose() {
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
        assert_eq!(derive_seed(7, "x", 3), derive_seed(7, "x", 3));
    }

    #[test]
    fn config_mismatch() {
        let ds = synthetic(&SyntheticSpec::default()).unwrap();
        let m = Model::random(ModelConfig::few_shot(1, 8, 1, 16, 3, 1), 0).unwrap();
        let ep = sample_episode(&ds, 5, 1, 0).unwrap();
        assert!(run_episode(&Engine::Float(&m, AttentionKind::Reference), &ep).is_err());
    }
}
