//! Browser bindings: train a small model on synthetic albums, inspect what
//! it selects and writes for an album, and score text with BLEU.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use hatstory::data::{split_words, synth_generate, Dataset, SynthSpec, Vocabulary};
use hatstory::evaluation::{bleu_n, summary_precision_recall};
use hatstory::model::{Model, SelectionMode};
use hatstory::numerics::{Rng, Tensor};
use hatstory::training::{adam_step, init_model, item_gradient, OptimizerState, TrainConfig, TrainSet};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
struct AlbumView {
    album_id: String,
    photos: Vec<String>,
    planted: Vec<String>,
    selected: Vec<String>,
    /// Selector probabilities, one row per sentence step.
    attention: Vec<Vec<f64>>,
    precision: f64,
    recall: f64,
    reference: Vec<String>,
    generated: Vec<String>,
}

/// A synthetic dataset and a model trained on it one epoch at a time.
#[wasm_bindgen]
pub struct Demo {
    data: Dataset,
    vocabulary: Vocabulary,
    set: TrainSet,
    cfg: TrainConfig,
    model: Model,
    state: OptimizerState,
    shuffle: Rng,
    negatives: Rng,
    epochs: usize,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(albums: usize, seed: u32) -> Result<Demo, JsError> {
        let seed = u64::from(seed);
        let data = synth_generate(&SynthSpec { albums, seed, ..SynthSpec::default() }).map_err(js_err)?;
        let cfg = TrainConfig { learning_rate: 3e-3, d_g: 16, d_w: 8, seed, ..TrainConfig::default() };
        let vocabulary = data.vocabulary(cfg.min_count);
        let set = TrainSet::from_dataset(&data, &vocabulary).map_err(js_err)?;
        let model = init_model(&cfg, vocabulary.len()).map_err(js_err)?;
        let state = OptimizerState::new(&model.params);
        let root = Rng::new(seed);
        Ok(Demo {
            data,
            vocabulary,
            set,
            cfg,
            model,
            state,
            shuffle: root.fork(1),
            negatives: root.fork(2),
            epochs: 0,
        })
    }

    pub fn albums(&self) -> usize {
        self.data.albums.len()
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    /// Runs `epochs` more epochs; returns the last epoch's mean loss.
    pub fn train(&mut self, epochs: usize) -> Result<f64, JsError> {
        let mut mean = f64::NAN;
        for _ in 0..epochs {
            let order = self.shuffle.permutation(self.set.examples.len());
            let mut total = 0.0;
            for batch in order.chunks(self.cfg.batch_size) {
                let mut sum: Option<Vec<Tensor>> = None;
                for &i in batch {
                    let ex = &self.set.examples[i];
                    let g = item_gradient(&self.model, &self.set.features[ex.album], &ex.story, &self.cfg, &mut self.negatives)
                        .map_err(js_err)?;
                    total += g.total;
                    sum = Some(match sum {
                        None => g.grads,
                        Some(acc) => acc
                            .iter()
                            .zip(&g.grads)
                            .map(|(a, b)| Tensor::new(a.shape().to_vec(), a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()))
                            .collect::<Result<_, _>>()
                            .map_err(js_err)?,
                    });
                }
                let scale = 1.0 / batch.len() as f64;
                let grads: Vec<Tensor> = sum.unwrap_or_default().iter().map(|g| g.map(|x| x * scale)).collect();
                adam_step(&mut self.model.params, &grads, &mut self.state, &self.cfg).map_err(js_err)?;
            }
            mean = total / self.set.examples.len() as f64;
            self.epochs += 1;
        }
        Ok(mean)
    }

    /// Selected summary, selector attention and a beam-search story for one
    /// album, as JSON.
    pub fn inspect(&self, album: usize, beam: usize) -> Result<String, JsError> {
        let a = self.data.albums.get(album).ok_or_else(|| JsError::new("no such album"))?;
        let f = a.features().map_err(js_err)?;
        let sel = self.model.select(&f, &SelectionMode::HardTest).map_err(js_err)?;
        let selected = a.photo_ids(&sel.indices);
        let (precision, recall) = summary_precision_recall(&selected, &a.gt_summaries).map_err(js_err)?;
        let story = self.model.generate_story(&f, beam.clamp(1, 3), self.cfg.max_len).map_err(js_err)?;
        let view = AlbumView {
            album_id: a.album_id.clone(),
            photos: a.photos.iter().map(|p| p.photo_id.clone()).collect(),
            planted: a.gt_summaries.first().cloned().unwrap_or_default(),
            selected,
            attention: (0..sel.probs.rows()).map(|t| sel.probs.row(t).to_vec()).collect(),
            precision,
            recall,
            reference: a.stories.first().map(|s| s.sentences.clone()).unwrap_or_default(),
            generated: story.sentences().iter().map(|s| self.vocabulary.decode(s)).collect(),
        };
        serde_json::to_string(&view).map_err(js_err)
    }
}

/// Corpus BLEU-n of one hypothesis against one reference.
#[wasm_bindgen]
pub fn bleu(hypothesis: &str, reference: &str, n: usize) -> Result<f64, JsError> {
    bleu_n(&[split_words(hypothesis)], &[vec![split_words(reference)]], n).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_lowers_the_loss() {
        let mut d = Demo::new(4, 3).unwrap();
        let first = d.train(1).unwrap();
        let later = d.train(20).unwrap();
        assert!(later < first, "{later} vs {first}");
        assert_eq!(d.epochs(), 21);
        let view: serde_json::Value = serde_json::from_str(&d.inspect(0, 3).unwrap()).unwrap();
        assert_eq!(view["selected"].as_array().unwrap().len(), 5);
        assert_eq!(view["generated"].as_array().unwrap().len(), 5);
    }

    #[test]
    fn bleu_hand_example() {
        assert!((bleu("a b c d", "a b c e", 3).unwrap() - 0.6299605249474366).abs() < 1e-12);
    }
}
