use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hatstory::data::{synth_generate, LoadOptions, SynthSpec};
use hatstory::evaluation::MetricReport;
use hatstory::harness::{
    create_run_dir, eval_generation, eval_retrieval, eval_summarization, file_sha256, generate_all,
    gradcheck_modules, load_checkpoint, read_dataset, train_into, Checkpoint, SummaryMethod, GRADCHECK_STEP,
    GRADCHECK_TOL,
};
use hatstory::training::TrainConfig;
use hatstory::{Error, Result};

#[derive(Parser)]
#[command(name = "hatstory", version, about = "Hierarchically-attentive album storytelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    /// Top-5 accumulated attention of an enc-attn-dec checkpoint.
    AttnAgg,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Dataset file (hatstory-v1 JSON lines).
    #[arg(long)]
    data: PathBuf,
    /// Enforce the 10–50 photo bounds of real album data.
    #[arg(long)]
    vist_bounds: bool,
}

impl DataArgs {
    fn options(&self) -> LoadOptions {
        if self.vist_bounds {
            LoadOptions::vist()
        } else {
            LoadOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with planted summaries.
    Synth {
        #[arg(long, default_value_t = 20)]
        albums: usize,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        noise_sigma: f64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model into a fresh run directory under --out.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// JSON config with TrainConfig field names; defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write straight into --out instead of a timestamped subdirectory.
        #[arg(long)]
        exact_dir: bool,
    },
    /// Generate one story per album.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=3))]
        beam: u64,
        #[arg(long)]
        max_len: Option<usize>,
        /// Decode from the first ground-truth summary instead of the selector.
        #[arg(long)]
        oracle_selection: bool,
        /// Output JSON-lines file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// BLEU-1…4 and CIDEr of generated stories.
    EvalGen {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 3)]
        beam: usize,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        oracle_selection: bool,
        /// Directory for generation.json / generation.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarization precision / recall against ground-truth summaries.
    EvalSumm {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Album retrieval by story likelihood.
    EvalRetrieval {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Use the first N albums that have a story; all when absent.
        #[arg(long)]
        pool_size: Option<usize>,
        /// Score by per-word mean instead of total log-likelihood.
        #[arg(long)]
        per_word: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every module's gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(ckpt: &Path) -> Result<(Checkpoint, String)> {
    Ok((load_checkpoint(ckpt)?, file_sha256(ckpt)?))
}

fn emit_report(report: &MetricReport, out: Option<&Path>) -> Result<()> {
    if let Some(dir) = out {
        let (json, csv) = report.write(dir)?;
        eprintln!("wrote {} and {}", json.display(), csv.display());
    }
    let mut agg = String::new();
    for (k, v) in &report.aggregate {
        agg.push_str(&format!("{k} {v:.6}  "));
    }
    println!("{} {}", report.task, agg.trim_end());
    Ok(())
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io { path: p.display().to_string(), source: e }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth { albums, n, k, classes, seed, noise_sigma, out } => {
            let ds = synth_generate(&SynthSpec { albums, n, k, classes, seed, noise_sigma })?;
            write_out(out.as_deref(), &ds.to_jsonl())?;
        }
        Command::Train { data, config, out, exact_dir } => {
            let cfg = match &config {
                Some(p) => TrainConfig::load(p)?,
                None => TrainConfig::default(),
            };
            let ds = read_dataset(&data.data, &data.options())?;
            let dir = if exact_dir { out } else { create_run_dir(&out, cfg.seed)? };
            let run = train_into(&ds, &cfg, &dir, &mut std::io::stderr())?;
            println!("{}", run.dir.display());
        }
        Command::Generate { ckpt, data, beam, max_len, oracle_selection, out } => {
            let (ckpt, _) = load(&ckpt)?;
            let ds = read_dataset(&data.data, &data.options())?;
            let max_len = max_len.unwrap_or(ckpt.config.max_len);
            let mut text = String::new();
            for (record, _) in generate_all(&ckpt, &ds, beam as usize, max_len, oracle_selection)? {
                text.push_str(&serde_json::to_string(&record).expect("record serializes"));
                text.push('\n');
            }
            write_out(out.as_deref(), &text)?;
        }
        Command::EvalGen { ckpt, data, beam, max_len, oracle_selection, out } => {
            let (ckpt, sha) = load(&ckpt)?;
            let ds = read_dataset(&data.data, &data.options())?;
            let max_len = max_len.unwrap_or(ckpt.config.max_len);
            let report = eval_generation(&ckpt, &ds, beam, max_len, oracle_selection, Some(sha))?;
            emit_report(&report, out.as_deref())?;
        }
        Command::EvalSumm { ckpt, data, baseline, out } => {
            let (ckpt, sha) = load(&ckpt)?;
            let ds = read_dataset(&data.data, &data.options())?;
            let method = match baseline {
                Some(Baseline::AttnAgg) => SummaryMethod::AttnAgg,
                None => SummaryMethod::Selector,
            };
            let report = eval_summarization(&ckpt, &ds, method, Some(sha))?;
            emit_report(&report, out.as_deref())?;
        }
        Command::EvalRetrieval { ckpt, data, pool_size, per_word, out } => {
            let (ckpt, sha) = load(&ckpt)?;
            let ds = read_dataset(&data.data, &data.options())?;
            let (report, _) = eval_retrieval(&ckpt, &ds, pool_size, per_word, Some(sha))?;
            emit_report(&report, out.as_deref())?;
        }
        Command::Gradcheck { seed } => {
            let start = std::time::Instant::now();
            let rows = gradcheck_modules(seed)?;
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "step {GRADCHECK_STEP:e}, tolerance {GRADCHECK_TOL:e}");
            let mut ok = true;
            for r in &rows {
                ok &= r.pass;
                let _ = writeln!(
                    stdout,
                    "{:<10} max rel err {:.3e} over {:>4} params  {}",
                    r.module,
                    r.max_rel_err,
                    r.checked,
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            let _ = writeln!(stdout, "{:.2?}", start.elapsed());
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
