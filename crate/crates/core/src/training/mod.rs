//! Generation and ranking losses, shuffled negatives, Adam, and the
//! training loop.

mod adam;
mod config;
mod loss;
mod trainer;

pub use adam::{adam_step, clip_gradients, global_norm, OptimizerState};
pub use config::{RankLossForm, TrainConfig};
pub use loss::{generation_loss, make_negative, ranking_loss, ranking_loss_var, total_loss, LossParts};
pub use trainer::{
    init_model, item_gradient, loss_curve_csv, per_word_nll, train, train_with, write_loss_curve,
    EpochStats, ItemGradient, TrainSet, INIT_STREAM, LOSS_CURVE_HEADER, NEGATIVE_STREAM,
    SHUFFLE_STREAM,
};
