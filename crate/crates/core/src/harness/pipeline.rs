//! Train / generate / evaluate pipelines behind the command-line tool.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::data::{split_words, Dataset, LoadOptions, Story};
use crate::error::{Error, Result};
use crate::evaluation::{
    attention_aggregate_summary, bleu_n, cider_per_item, retrieval_eval, summary_precision_recall,
    Fingerprint, MetricReport, RetrievalResult,
};
use crate::harness::{save_checkpoint, Checkpoint};
use crate::model::{Architecture, GeneratedStory, SelectionMode};
use crate::training::{init_model, train_with, write_loss_curve, EpochStats, TrainConfig, TrainSet};

pub fn read_dataset(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_reader(BufReader::new(file), opts)
}

/// `run-<unix seconds>-seed<seed>`
pub fn run_dir_name(seed: u64, unix_secs: u64) -> String {
    format!("run-{unix_secs}-seed{seed}")
}

/// Creates a fresh run directory under `parent`, suffixing `-2`, `-3`, …
/// when the name is taken.
pub fn create_run_dir(parent: impl AsRef<Path>, seed: u64) -> Result<PathBuf> {
    let parent = parent.as_ref();
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let base = run_dir_name(seed, secs);
    let mut dir = parent.join(&base);
    let mut i = 1;
    loop {
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                i += 1;
                dir = parent.join(format!("{base}-{i}"));
            }
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
}

/// Builds the vocabulary, initializes and trains a model on `ds`.
pub fn train_checkpoint(
    ds: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochStats, &crate::model::Model),
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    cfg.validate()?;
    if ds.k != cfg.k {
        return Err(Error::Config(format!("dataset has k = {}, config says k = {}", ds.k, cfg.k)));
    }
    let vocabulary = ds.vocabulary(cfg.min_count);
    let set = TrainSet::from_dataset(ds, &vocabulary)?;
    let mut model = init_model(cfg, vocabulary.len())?;
    let curve = train_with(&mut model, &set, cfg, observer)?;
    Ok((Checkpoint { model, vocabulary, config: cfg.clone() }, curve))
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
    pub loss_curve: PathBuf,
    pub curve: Vec<EpochStats>,
}

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_CURVE_FILE: &str = "loss_curve.csv";

/// Trains into `dir`, writing the resolved config, the loss curve and the
/// checkpoint. Progress lines go to `log`.
pub fn train_into(ds: &Dataset, cfg: &TrainConfig, dir: &Path, log: &mut dyn Write) -> Result<RunOutput> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_path = dir.join(CONFIG_FILE);
    std::fs::write(&config_path, cfg.to_json()).map_err(|e| Error::io(&config_path, e))?;
    let _ = writeln!(log, "seed {} config {}", cfg.seed, serde_json::to_string(cfg).expect("config serializes"));
    let (ckpt, curve) = train_checkpoint(ds, cfg, &mut |s, _| {
        let _ = writeln!(
            log,
            "epoch {} loss {:.6} gen {:.6} rank {:.6}",
            s.epoch, s.mean_loss, s.mean_gen_loss, s.mean_rank_loss
        );
    })?;
    let loss_curve = dir.join(LOSS_CURVE_FILE);
    write_loss_curve(&loss_curve, &curve)?;
    let checkpoint = dir.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &checkpoint)?;
    Ok(RunOutput { dir: dir.to_path_buf(), checkpoint, loss_curve, curve })
}

/// One generated story in the output file of `generate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub album_id: String,
    pub sentences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<Vec<String>>,
}

/// Decodes a story for every album. With `oracle` the hierarchical model
/// uses each album's first ground-truth summary instead of its selector;
/// albums without one are an error.
pub fn generate_all(
    ckpt: &Checkpoint,
    ds: &Dataset,
    beam: usize,
    max_len: usize,
    oracle: bool,
) -> Result<Vec<(GeneratedRecord, GeneratedStory)>> {
    if ds.k != ckpt.model.config.k {
        return Err(Error::Data(format!("dataset has k = {}, model expects {}", ds.k, ckpt.model.config.k)));
    }
    if oracle && ckpt.model.config.architecture != Architecture::HAttn {
        return Err(Error::Config("oracle selection needs the hierarchical model".into()));
    }
    ds.albums
        .iter()
        .map(|a| {
            let mode = if oracle {
                if a.gt_summaries.is_empty() {
                    return Err(Error::Data(format!("album {}: no ground-truth summary", a.album_id)));
                }
                SelectionMode::Oracle(a.gt_indices(0)?)
            } else {
                SelectionMode::HardTest
            };
            let g = ckpt.model.generate(&a.features()?, &mode, beam, max_len)?;
            let record = GeneratedRecord {
                album_id: a.album_id.clone(),
                sentences: g.story.sentences().iter().map(|s| ckpt.vocabulary.decode(s)).collect(),
                selected: g.selected.as_ref().map(|ix| a.photo_ids(ix)),
            };
            Ok((record, g))
        })
        .collect()
}

fn fingerprint(ckpt: &Checkpoint, checkpoint_sha256: Option<String>) -> Fingerprint {
    Fingerprint::new(ckpt.config.seed, &ckpt.model.config, ckpt.config.fingerprint(), checkpoint_sha256)
}

/// BLEU-1…4 and CIDEr of generated stories against every reference story.
/// Per-item scores are CIDEr; the aggregate BLEU values are corpus-level,
/// the aggregate CIDEr is the per-item mean.
pub fn eval_generation(
    ckpt: &Checkpoint,
    ds: &Dataset,
    beam: usize,
    max_len: usize,
    oracle: bool,
    checkpoint_sha256: Option<String>,
) -> Result<MetricReport> {
    let with_refs = Dataset {
        k: ds.k,
        albums: ds.albums.iter().filter(|a| !a.stories.is_empty()).cloned().collect(),
    };
    if with_refs.is_empty() {
        return Err(Error::Data("no album has a reference story".into()));
    }
    let generated = generate_all(ckpt, &with_refs, beam, max_len, oracle)?;
    let hyps: Vec<Vec<String>> = generated
        .iter()
        .map(|(r, _)| r.sentences.iter().flat_map(|s| split_words(s)).collect())
        .collect();
    let refs: Vec<Vec<Vec<String>>> = with_refs
        .albums
        .iter()
        .map(|a| {
            a.stories
                .iter()
                .map(|s| s.sentences.iter().flat_map(|x| split_words(x)).collect())
                .collect()
        })
        .collect();
    let mut report = MetricReport::new("generation", fingerprint(ckpt, checkpoint_sha256));
    let per_item = cider_per_item(&hyps, &refs)?;
    for (a, c) in with_refs.albums.iter().zip(&per_item) {
        report.push_item(&a.album_id, &[("cider", *c)]);
    }
    report.aggregate_means(&["cider"]);
    for n in 1..=4 {
        report.aggregate.insert(format!("bleu{n}"), bleu_n(&hyps, &refs, n)?);
    }
    report.notes.push(format!("beam {beam}, max_len {max_len}, oracle selection {oracle}"));
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SummaryMethod {
    /// Hard-test selection of the hierarchical model.
    Selector,
    /// Top-5 accumulated decoder attention of the enc-attn-dec baseline.
    AttnAgg,
}

/// Summarization precision/recall on every album with a ground truth.
pub fn eval_summarization(
    ckpt: &Checkpoint,
    ds: &Dataset,
    method: SummaryMethod,
    checkpoint_sha256: Option<String>,
) -> Result<MetricReport> {
    let arch = ckpt.model.config.architecture;
    let needed = match method {
        SummaryMethod::Selector => Architecture::HAttn,
        SummaryMethod::AttnAgg => Architecture::EncAttnDec,
    };
    if arch != needed {
        return Err(Error::Config(format!(
            "{method:?} summaries need a {needed:?} checkpoint, got {arch:?}"
        )));
    }
    let mut report = MetricReport::new("summarization", fingerprint(ckpt, checkpoint_sha256));
    for a in ds.albums.iter().filter(|a| !a.gt_summaries.is_empty()) {
        let f = a.features()?;
        let picked = match method {
            SummaryMethod::Selector => ckpt.model.select(&f, &SelectionMode::HardTest)?.indices,
            SummaryMethod::AttnAgg => {
                let g = ckpt.model.generate(&f, &SelectionMode::HardTest, ckpt.config.beam, ckpt.config.max_len)?;
                let attn = g.attention.ok_or_else(|| Error::State("decoder produced no attention".into()))?;
                attention_aggregate_summary(&attn)?
            }
        };
        let (p, r) = summary_precision_recall(&a.photo_ids(&picked), &a.gt_summaries)?;
        report.push_item(&a.album_id, &[("precision", p), ("recall", r)]);
    }
    if report.items.is_empty() {
        return Err(Error::Data("no album has a ground-truth summary".into()));
    }
    report.aggregate_means(&["precision", "recall"]);
    report.notes.push(format!("method {method:?}"));
    Ok(report)
}

/// Each album of the pool (the first `pool_size` albums with a story) is
/// queried with its first story.
pub fn eval_retrieval(
    ckpt: &Checkpoint,
    ds: &Dataset,
    pool_size: Option<usize>,
    per_word: bool,
    checkpoint_sha256: Option<String>,
) -> Result<(MetricReport, RetrievalResult)> {
    let pool: Vec<_> = ds
        .albums
        .iter()
        .filter(|a| !a.stories.is_empty())
        .take(pool_size.unwrap_or(usize::MAX))
        .collect();
    if pool.is_empty() {
        return Err(Error::Data("retrieval pool is empty".into()));
    }
    let features = pool.iter().map(|a| a.features()).collect::<Result<Vec<_>>>()?;
    let stories = pool
        .iter()
        .map(|a| a.stories[0].tokenize(&ckpt.vocabulary).map_err(|e| Error::Data(format!("album {}: {e}", a.album_id))))
        .collect::<Result<Vec<Story>>>()?;
    let result = retrieval_eval(&ckpt.model, &stories, &features, per_word)?;
    let mut report = MetricReport::new("retrieval", fingerprint(ckpt, checkpoint_sha256));
    for (a, &r) in pool.iter().zip(&result.ranks) {
        report.push_item(&a.album_id, &[("rank", r as f64)]);
    }
    report.aggregate.insert("recall_at_1".into(), result.recall_at_1);
    report.aggregate.insert("recall_at_5".into(), result.recall_at_5);
    report.aggregate.insert("recall_at_10".into(), result.recall_at_10);
    report.aggregate.insert("median_rank".into(), result.median_rank);
    report.notes.push(format!(
        "pool of {} albums, {} scores",
        pool.len(),
        if per_word { "per-word" } else { "total log-likelihood" }
    ));
    Ok((report, result))
}
