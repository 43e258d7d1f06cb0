//! Synthetic albums with planted summary photos.
//!
//! Five "salient" photos per album carry a one-hot class indicator in
//! coordinates [0, classes) plus Gaussian noise; the rest carry noise only.
//! Sentence t of each story is drawn from the templates of the class of the
//! t-th salient photo (in album order), so the story is only predictable by
//! attending to the right photos.

use serde::{Deserialize, Serialize};

use crate::data::album::{Album, Dataset, Photo, StoryText};
use crate::data::story::STORY_SENTENCES;
use crate::error::{Error, Result};
use crate::numerics::Rng;

const NOUNS: [&str; 10] = [
    "dog", "beach", "cake", "car", "tree", "house", "bird", "boat", "flower", "mountain",
];
const ADJECTIVES: [&str; 10] = [
    "happy", "sunny", "sweet", "fast", "tall", "old", "loud", "small", "red", "high",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub albums: usize,
    pub n: usize,
    pub k: usize,
    pub classes: usize,
    pub seed: u64,
    pub noise_sigma: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            albums: 20,
            n: 10,
            k: 16,
            classes: 5,
            seed: 7,
            noise_sigma: 0.05,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.k < self.classes + 1 {
            return Err(Error::Config(format!(
                "k ({}) must be at least classes + 1 ({})",
                self.k,
                self.classes + 1
            )));
        }
        if self.n < STORY_SENTENCES {
            return Err(Error::Config(format!(
                "albums need at least {STORY_SENTENCES} photos, got n = {}",
                self.n
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma {}", self.noise_sigma)));
        }
        Ok(())
    }
}

fn noun(class: usize) -> String {
    NOUNS.get(class).map_or_else(|| format!("thing{class}"), |s| s.to_string())
}

fn adjective(class: usize) -> String {
    ADJECTIVES.get(class).map_or_else(|| format!("kind{class}"), |s| s.to_string())
}

/// Every sentence the grammar can emit for `class`.
pub fn templates(class: usize) -> Vec<String> {
    let (n, a) = (noun(class), adjective(class));
    vec![
        format!("we saw the {n} ."),
        format!("the {n} was {a} ."),
        format!("look at that {a} {n} !"),
    ]
}

/// Albums with planted summaries and one story each, deterministic in `seed`.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let mut albums = Vec::with_capacity(spec.albums);
    for a in 0..spec.albums {
        let mut salient = rng.choose_distinct(spec.n, STORY_SENTENCES);
        salient.sort_unstable();
        // Distinct classes when there are enough of them, so that reordering
        // a story always changes it.
        let classes: Vec<usize> = if spec.classes >= STORY_SENTENCES {
            rng.choose_distinct(spec.classes, STORY_SENTENCES)
        } else {
            (0..STORY_SENTENCES).map(|_| rng.below(spec.classes)).collect()
        };
        let mut photos = Vec::with_capacity(spec.n);
        for i in 0..spec.n {
            let mut features: Vec<f64> =
                (0..spec.k).map(|_| spec.noise_sigma * rng.normal()).collect();
            if let Some(t) = salient.iter().position(|&s| s == i) {
                features[classes[t]] += 1.0;
            }
            photos.push(Photo {
                photo_id: format!("a{a:03}p{i:02}"),
                features,
            });
        }
        let sentences = classes
            .iter()
            .map(|&c| {
                let options = templates(c);
                options[rng.below(options.len())].clone()
            })
            .collect();
        let gt: Vec<String> = salient.iter().map(|&i| photos[i].photo_id.clone()).collect();
        albums.push(Album {
            album_id: format!("album{a:03}"),
            photos,
            gt_summaries: vec![gt],
            stories: vec![StoryText { sentences }],
        });
    }
    Dataset::new(spec.k, albums)
}

/// Class planted in each photo, `None` for filler photos; recovered from the
/// generator's construction (largest indicator coordinate above 0.5).
pub fn planted_class(features: &[f64], classes: usize) -> Option<usize> {
    let (c, &v) = features[..classes]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))?;
    (v > 0.5).then_some(c)
}
