//! Image sources for few-shot episodes.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::model::PixelPolarity;

/// Classes of flattened images with pixels in `[0, 1]`.
pub trait Dataset: Sync {
    fn pixels(&self) -> usize;
    fn classes(&self) -> usize;
    fn samples(&self, class: usize) -> usize;
    fn image(&self, class: usize, index: usize) -> &[f64];
}

/// In-memory dataset, one `Vec` of images per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pixels: usize,
    classes: Vec<Vec<Vec<f64>>>,
    names: Vec<String>,
}

impl ImageSet {
    pub fn new(pixels: usize, classes: Vec<Vec<Vec<f64>>>, names: Vec<String>) -> Result<Self> {
        if names.len() != classes.len() {
            return Err(Error::Dataset("one name per class required".into()));
        }
        for (c, imgs) in classes.iter().enumerate() {
            for img in imgs {
                if img.len() != pixels {
                    return Err(Error::Dataset(format!(
                        "class {} has an image with {} pixels, expected {pixels}",
                        names[c],
                        img.len()
                    )));
                }
            }
        }
        Ok(Self {
            pixels,
            classes,
            names,
        })
    }

    pub fn name(&self, class: usize) -> &str {
        &self.names[class]
    }
}

impl Dataset for ImageSet {
    fn pixels(&self) -> usize {
        self.pixels
    }

    fn classes(&self) -> usize {
        self.classes.len()
    }

    fn samples(&self, class: usize) -> usize {
        self.classes[class].len()
    }

    fn image(&self, class: usize, index: usize) -> &[f64] {
        &self.classes[class][index]
    }
}

/// Gaussian blobs around uniform random prototypes, clipped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub pixels: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 100,
            samples_per_class: 20,
            pixels: 16,
            noise: 0.1,
            seed: 0,
        }
    }
}

pub fn synthetic(spec: &SyntheticSpec) -> Result<ImageSet> {
    if spec.classes == 0 || spec.samples_per_class == 0 || spec.pixels == 0 {
        return Err(Error::Dataset(
            "synthetic dataset dimensions must be positive".into(),
        ));
    }
    let noise = Normal::new(0.0, spec.noise)
        .map_err(|e| Error::Dataset(format!("noise level {}: {e}", spec.noise)))?;
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = (0..spec.classes)
        .map(|_| {
            let proto: Vec<f64> = (0..spec.pixels).map(|_| unit.sample(&mut rng)).collect();
            (0..spec.samples_per_class)
                .map(|_| {
                    proto
                        .iter()
                        .map(|p| (p + noise.sample(&mut rng)).clamp(0.0, 1.0))
                        .collect()
                })
                .collect()
        })
        .collect();
    let names = (0..spec.classes)
        .map(|c| format!("synthetic/{c}"))
        .collect();
    ImageSet::new(spec.pixels, classes, names)
}

/// Which Omniglot split to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmniglotSplit {
    Background,
    Evaluation,
}

impl OmniglotSplit {
    fn dir(self) -> &'static str {
        match self {
            OmniglotSplit::Background => "images_background",
            OmniglotSplit::Evaluation => "images_evaluation",
        }
    }
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

/// Loads one image as `side * side` pixels in `[0, 1]`.
pub fn load_image(path: &Path, side: u32, polarity: PixelPolarity) -> Result<Vec<f64>> {
    let img = image::open(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?
        .to_luma8();
    let img = if img.dimensions() == (side, side) {
        img
    } else {
        image::imageops::resize(&img, side, side, image::imageops::FilterType::Triangle)
    };
    Ok(img
        .pixels()
        .map(|p| {
            let v = p.0[0] as f64 / 255.0;
            match polarity {
                PixelPolarity::InkHigh => 1.0 - v,
                PixelPolarity::AsStored => v,
            }
        })
        .collect())
}

/// Reads an Omniglot tree laid out as `alphabet/character/*.png`.
///
/// `root` may be the split directory itself or its parent, in which case the
/// requested split's subdirectory is used.
pub fn load_omniglot(
    root: &Path,
    split: OmniglotSplit,
    side: u32,
    polarity: PixelPolarity,
) -> Result<ImageSet> {
    let nested = root.join(split.dir());
    let base = if nested.is_dir() {
        nested
    } else {
        root.to_path_buf()
    };
    if !base.is_dir() {
        return Err(Error::Dataset(format!(
            "{} is not a directory",
            base.display()
        )));
    }
    let mut classes = Vec::new();
    let mut names = Vec::new();
    for alphabet in sorted_subdirs(&base)? {
        for character in sorted_subdirs(&alphabet)? {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&character)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
                .collect();
            if files.is_empty() {
                continue;
            }
            files.sort();
            let images = files
                .iter()
                .map(|f| load_image(f, side, polarity))
                .collect::<Result<Vec<_>>>()?;
            let rel = character.strip_prefix(&base).unwrap_or(&character);
            names.push(rel.display().to_string());
            classes.push(images);
        }
    }
    if classes.is_empty() {
        return Err(Error::Dataset(format!(
            "no character directories under {}",
            base.display()
        )));
    }
    tracing::info!(classes = classes.len(), root = %base.display(), "loaded omniglot");
    ImageSet::new((side * side) as usize, classes, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_bounded() {
        let spec = SyntheticSpec {
            classes: 5,
            samples_per_class: 3,
            ..Default::default()
        };
        let a = synthetic(&spec).unwrap();
        assert_eq!(a, synthetic(&spec).unwrap());
        assert_eq!((a.classes(), a.samples(4), a.pixels()), (5, 3, 16));
        assert!(a.image(2, 1).iter().all(|p| (0.0..=1.0).contains(p)));
        let b = synthetic(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn omniglot_layout() {
        let dir = tempfile::tempdir().unwrap();
        let split = dir.path().join("images_evaluation");
        for (a, c) in [
            ("Alpha", "character01"),
            ("Alpha", "character02"),
            ("Beta", "character01"),
        ] {
            let d = split.join(a).join(c);
            std::fs::create_dir_all(&d).unwrap();
            for i in 0..2 {
                let mut img = image::GrayImage::from_pixel(56, 56, image::Luma([255]));
                img.put_pixel(0, 0, image::Luma([0]));
                img.save(d.join(format!("{i}.png"))).unwrap();
            }
        }
        let ds = load_omniglot(
            dir.path(),
            OmniglotSplit::Evaluation,
            28,
            PixelPolarity::InkHigh,
        )
        .unwrap();
        assert_eq!(ds.classes(), 3);
        assert_eq!(ds.name(2), "Beta/character01");
        assert_eq!(ds.pixels(), 784);
        // white background maps to 0 when ink is high
        assert_eq!(ds.image(0, 0)[783], 0.0);
        assert!(ds.image(0, 0)[0] > 0.0);
        let raw = load_omniglot(
            &split,
            OmniglotSplit::Evaluation,
            28,
            PixelPolarity::AsStored,
        )
        .unwrap();
        assert_eq!(raw.image(0, 0)[783], 1.0);
        assert!(load_omniglot(
            dir.path(),
            OmniglotSplit::Background,
            28,
            PixelPolarity::InkHigh
        )
        .is_err());
    }
}
