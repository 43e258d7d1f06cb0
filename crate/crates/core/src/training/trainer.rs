use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Dataset, Example, Story, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{prepare, Model, SelectionMode};
use crate::numerics::{Rng, Tape, Tensor};
use crate::training::{adam_step, clip_gradients, generation_loss, total_loss, OptimizerState, TrainConfig};

/// RNG streams forked from the run seed.
pub const INIT_STREAM: u64 = 0;
pub const SHUFFLE_STREAM: u64 = 1;
pub const NEGATIVE_STREAM: u64 = 2;

/// Albums as feature matrices plus every (album, story) training item.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSet {
    pub album_ids: Vec<String>,
    pub features: Vec<Tensor>,
    pub examples: Vec<Example>,
}

impl TrainSet {
    pub fn from_dataset(ds: &Dataset, vocab: &Vocabulary) -> Result<Self> {
        Ok(TrainSet {
            album_ids: ds.albums.iter().map(|a| a.album_id.clone()).collect(),
            features: ds.feature_tensors()?,
            examples: ds.examples(vocab)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_gen_loss: f64,
    /// Unweighted hinge; 0 when λ = 0.
    pub mean_rank_loss: f64,
}

/// Fresh model weights drawn from the config's seed.
pub fn init_model(cfg: &TrainConfig, vocab: usize) -> Result<Model> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed).fork(INIT_STREAM);
    Model::new(cfg.model_config(vocab), &mut rng)
}

/// Loss values and parameter gradients for one item.
pub struct ItemGradient {
    pub grads: Vec<Tensor>,
    pub total: f64,
    pub gen: f64,
    pub rank: f64,
}

pub fn item_gradient(
    model: &Model,
    features: &Tensor,
    story: &Story,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<ItemGradient> {
    let mut tape = Tape::new();
    let m = model.bind(&mut tape, true);
    let prep = prepare(&mut tape, &m, features, &SelectionMode::SoftTrain)?;
    let parts = total_loss(&mut tape, &m, &prep, story, cfg, rng)?;
    tape.backward(parts.total)?;
    let grads = m
        .p
        .leaves()
        .into_iter()
        .map(|(_, &v)| tape.grad(v))
        .collect::<Result<_>>()?;
    Ok(ItemGradient {
        grads,
        total: tape.scalar(parts.total),
        gen: tape.scalar(parts.gen),
        rank: parts.rank.map_or(0.0, |r| tape.scalar(r)),
    })
}

fn check_set(model: &Model, set: &TrainSet) -> Result<()> {
    if set.examples.is_empty() {
        return Err(Error::Data("no training stories".into()));
    }
    for ex in &set.examples {
        let id = set
            .album_ids
            .get(ex.album)
            .ok_or_else(|| Error::Data(format!("story refers to missing album {}", ex.album)))?;
        let f = &set.features[ex.album];
        if f.cols() != model.config.k {
            return Err(Error::Data(format!(
                "album {id}: feature width {} but the model expects k = {}",
                f.cols(),
                model.config.k
            )));
        }
        Story::new(ex.story.sentences().to_vec(), model.config.vocab)
            .map_err(|e| Error::Data(format!("album {id}: {e}")))?;
    }
    Ok(())
}

/// Trains `model` in place for `cfg.epochs` epochs.
///
/// Each epoch visits the items in a seeded random order, in batches of
/// `cfg.batch_size`; a batch's gradients are summed in order, averaged, and
/// applied with one Adam step. `observer` sees each epoch's means and the
/// updated model as soon as the epoch finishes.
pub fn train_with(
    model: &mut Model,
    set: &TrainSet,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats, &Model),
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    check_set(model, set)?;
    let root = Rng::new(cfg.seed);
    let mut shuffle_rng = root.fork(SHUFFLE_STREAM);
    let mut negative_rng = root.fork(NEGATIVE_STREAM);
    let mut state = OptimizerState::new(&model.params);
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let order = shuffle_rng.permutation(set.examples.len());
        let (mut sum_total, mut sum_gen, mut sum_rank) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Vec<Tensor>> = None;
            for &i in batch {
                let ex = &set.examples[i];
                let item = item_gradient(model, &set.features[ex.album], &ex.story, cfg, &mut negative_rng)
                    .map_err(|e| match e {
                        Error::NumericDomain(msg) => Error::NumericDomain(format!(
                            "album {}: {msg}",
                            set.album_ids[ex.album]
                        )),
                        other => other,
                    })?;
                sum_total += item.total;
                sum_gen += item.gen;
                sum_rank += item.rank;
                match &mut acc {
                    None => acc = Some(item.grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&item.grads) {
                            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let mut grads = acc.expect("batches are non-empty");
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|x| *x *= scale);
            }
            if let Some(c) = cfg.clip_norm {
                clip_gradients(&mut grads, c);
            }
            adam_step(&mut model.params, &grads, &mut state, cfg)?;
        }
        let n = set.examples.len() as f64;
        let stats = EpochStats {
            epoch,
            mean_loss: sum_total / n,
            mean_gen_loss: sum_gen / n,
            mean_rank_loss: sum_rank / n,
        };
        if ![stats.mean_loss, stats.mean_gen_loss, stats.mean_rank_loss]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::NumericDomain(format!("non-finite loss in epoch {epoch}")));
        }
        observer(&stats, model);
        curve.push(stats);
    }
    Ok(curve)
}

pub fn train(model: &mut Model, set: &TrainSet, cfg: &TrainConfig) -> Result<Vec<EpochStats>> {
    train_with(model, set, cfg, &mut |_, _| {})
}

/// L_gen / token count (EOS included) under soft-train selection.
pub fn per_word_nll(model: &Model, features: &Tensor, story: &Story) -> Result<f64> {
    let mut tape = Tape::new();
    let m = model.bind(&mut tape, false);
    let prep = prepare(&mut tape, &m, features, &SelectionMode::SoftTrain)?;
    let loss = generation_loss(&mut tape, &m, &prep, story)?;
    Ok(tape.scalar(loss) / story.token_count() as f64)
}

pub const LOSS_CURVE_HEADER: &str = "epoch,mean_loss,mean_gen_loss,mean_rank_loss";

pub fn loss_curve_csv(curve: &[EpochStats]) -> String {
    let mut out = String::from(LOSS_CURVE_HEADER);
    out.push('\n');
    for s in curve {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.epoch, s.mean_loss, s.mean_gen_loss, s.mean_rank_loss
        );
    }
    out
}

pub fn write_loss_curve(path: impl AsRef<Path>, curve: &[EpochStats]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, loss_curve_csv(curve)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthSpec};

    fn tiny() -> (TrainSet, Vocabulary, TrainConfig) {
        let spec = SynthSpec { albums: 3, n: 6, k: 8, classes: 5, seed: 2, noise_sigma: 0.05 };
        let ds = synth_generate(&spec).unwrap();
        let vocab = ds.vocabulary(1);
        let set = TrainSet::from_dataset(&ds, &vocab).unwrap();
        let cfg = TrainConfig {
            k: 8,
            d_s: 6,
            d_g: 8,
            d_w: 6,
            epochs: 3,
            batch_size: 2,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        (set, vocab, cfg)
    }

    #[test]
    fn curves_are_finite_and_reproducible() {
        let (set, vocab, cfg) = tiny();
        let run = || {
            let mut model = init_model(&cfg, vocab.len()).unwrap();
            let curve = train(&mut model, &set, &cfg).unwrap();
            (loss_curve_csv(&curve), model.params.flat())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), pb.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert!(a.starts_with(LOSS_CURVE_HEADER));
        assert_eq!(a.lines().count(), 4);
    }

    #[test]
    fn zero_lambda_reports_no_rank_loss() {
        let (set, vocab, mut cfg) = tiny();
        cfg.lambda = 0.0;
        let mut model = init_model(&cfg, vocab.len()).unwrap();
        let curve = train(&mut model, &set, &cfg).unwrap();
        for s in curve {
            assert_eq!(s.mean_rank_loss, 0.0);
            assert_eq!(s.mean_loss, s.mean_gen_loss);
        }
    }

    #[test]
    fn bad_story_names_its_album() {
        let (mut set, vocab, cfg) = tiny();
        let mut model = init_model(&cfg, vocab.len()).unwrap();
        model.config.vocab = 5;
        model.params = crate::model::ModelParams::init(&model.config, &mut Rng::new(0)).unwrap();
        set.examples.truncate(1);
        let err = train(&mut model, &set, &cfg).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains(&set.album_ids[0]), "{err}");
    }

    #[test]
    fn fifty_epochs_overfit_one_album() {
        let ds = synth_generate(&SynthSpec { albums: 1, ..SynthSpec::default() }).unwrap();
        let vocab = ds.vocabulary(1);
        let set = TrainSet::from_dataset(&ds, &vocab).unwrap();
        let cfg = TrainConfig { epochs: 50, batch_size: 1, learning_rate: 1e-2, ..TrainConfig::default() };
        let mut model = init_model(&cfg, vocab.len()).unwrap();
        train(&mut model, &set, &cfg).unwrap();
        let ex = &set.examples[0];
        let nll = per_word_nll(&model, &set.features[ex.album], &ex.story).unwrap();
        assert!(nll < 0.1 * (vocab.len() as f64).ln(), "{nll}");
    }
}
