//! Checkpoints, experiment runs and the pipelines the CLI drives.

mod checkpoint;
mod gradcheck;
mod pipeline;

pub use checkpoint::{
    file_sha256, load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, ManifestEntry, MAGIC, VERSION,
};
pub use gradcheck::{gradcheck_instance, gradcheck_modules, ModuleCheck, GRADCHECK_STEP, GRADCHECK_TOL};
pub use pipeline::{
    create_run_dir, eval_generation, eval_retrieval, eval_summarization, generate_all, read_dataset, run_dir_name,
    train_checkpoint, train_into, GeneratedRecord, RunOutput, SummaryMethod, CHECKPOINT_FILE, CONFIG_FILE,
    LOSS_CURVE_FILE,
};
