//! Story metrics, summarization precision/recall and likelihood retrieval.

mod report;
mod retrieval;
mod summary;
mod text;

pub use report::{Fingerprint, ItemScores, MetricReport};
pub use retrieval::{
    album_scores, median_rank, rank_of, recall_at_k, retrieval_eval, retrieve, RetrievalEntry,
    RetrievalResult,
};
pub use summary::{attention_aggregate_summary, attention_aggregate_topk, summary_precision_recall};
pub use text::{bleu_n, cider, cider_per_item, ngram_counts};
