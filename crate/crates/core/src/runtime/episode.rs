//! N-way K-shot episodes and their token encoding.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// One input token: an image plus either a label one-hot or the query marker.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeToken {
    pub pixels: Vec<f64>,
    /// Episode-local label, `None` for the query.
    pub label: Option<usize>,
}

impl EpisodeToken {
    /// `pixels ++ one_hot(label, classes) ++ [query marker]`.
    pub fn features(&self, classes: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.pixels.len() + classes + 1);
        out.extend_from_slice(&self.pixels);
        out.extend((0..classes).map(|c| if self.label == Some(c) { 1.0 } else { 0.0 }));
        out.push(if self.label.is_none() { 1.0 } else { 0.0 });
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub classes: usize,
    pub shots: usize,
    /// Support tokens in presentation order.
    pub support: Vec<EpisodeToken>,
    pub query: Vec<f64>,
    pub query_label: usize,
    /// Dataset class for each episode-local label.
    pub class_ids: Vec<usize>,
    pub seed: u64,
}

impl Episode {
    /// Support tokens followed by the query token, as model inputs.
    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.support
            .iter()
            .map(|t| t.features(self.classes))
            .chain(std::iter::once(
                EpisodeToken {
                    pixels: self.query.clone(),
                    label: None,
                }
                .features(self.classes),
            ))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.support.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Draws `classes` distinct dataset classes, `shots` support images of each
/// and one query image from one of them, with random episode-local labels and
/// a shuffled support order. Deterministic in `seed`.
pub fn sample_episode(
    ds: &dyn Dataset,
    classes: usize,
    shots: usize,
    seed: u64,
) -> Result<Episode> {
    if classes == 0 || shots == 0 {
        return Err(Error::Dataset(
            "episodes need at least one class and one shot".into(),
        ));
    }
    let eligible: Vec<usize> = (0..ds.classes())
        .filter(|&c| ds.samples(c) > shots)
        .collect();
    if eligible.len() < classes {
        return Err(Error::Dataset(format!(
            "{classes}-way {shots}-shot episodes need {classes} classes with at least {} samples, dataset has {}",
            shots + 1,
            eligible.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = index::sample(&mut rng, eligible.len(), classes)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    let mut labels: Vec<usize> = (0..classes).collect();
    labels.shuffle(&mut rng);
    let query_pos = rng.random_range(0..classes);

    let mut class_ids = vec![0; classes];
    let mut support = Vec::with_capacity(classes * shots);
    let mut query = Vec::new();
    for (pos, (&class, &label)) in picked.iter().zip(&labels).enumerate() {
        class_ids[label] = class;
        let draws = index::sample(&mut rng, ds.samples(class), shots + 1);
        for i in draws.iter().take(shots) {
            support.push(EpisodeToken {
                pixels: ds.image(class, i).to_vec(),
                label: Some(label),
            });
        }
        if pos == query_pos {
            query = ds.image(class, draws.index(shots)).to_vec();
        }
    }
    support.shuffle(&mut rng);
    Ok(Episode {
        classes,
        shots,
        support,
        query,
        query_label: labels[query_pos],
        class_ids,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::dataset::{synthetic, SyntheticSpec};

    #[test]
    fn token_layout() {
        let t = EpisodeToken {
            pixels: vec![0.5, 0.25],
            label: Some(1),
        };
        assert_eq!(t.features(3), vec![0.5, 0.25, 0.0, 1.0, 0.0, 0.0]);
        let q = EpisodeToken {
            pixels: vec![0.5, 0.25],
            label: None,
        };
        assert_eq!(q.features(3), vec![0.5, 0.25, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn episode_shape() {
        let ds = synthetic(&SyntheticSpec::default()).unwrap();
        let ep = sample_episode(&ds, 5, 1, 3).unwrap();
        assert_eq!(ep.len(), 6);
        assert_eq!(ep.inputs().len(), 6);
        assert_eq!(ep, sample_episode(&ds, 5, 1, 3).unwrap());
        let ep = sample_episode(&ds, 5, 3, 4).unwrap();
        for label in 0..5 {
            assert_eq!(
                ep.support.iter().filter(|t| t.label == Some(label)).count(),
                3
            );
        }
        let q = ep.class_ids[ep.query_label];
        assert!((0..ds.samples(q)).any(|i| ds.image(q, i) == &ep.query[..]));
    }

    #[test]
    fn insufficient_data() {
        let ds = synthetic(&SyntheticSpec {
            classes: 4,
            samples_per_class: 2,
            ..Default::default()
        })
        .unwrap();
        assert!(sample_episode(&ds, 5, 1, 0).is_err());
        assert!(sample_episode(&ds, 3, 2, 0).is_err());
        assert!(sample_episode(&ds, 3, 1, 0).is_ok());
    }
}
