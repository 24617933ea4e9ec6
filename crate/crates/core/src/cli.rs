//! `histsim` command line: `train`, `query`, `evaluate`, `synth`.
//!
//! Exit status: 0 success, 2 config or usage error, 3 data or model error,
//! 4 internal numerical error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::context::rank;
use crate::error::{Error, Result};
use crate::eval::{generate_synthetic_corpus, run_cross_validation, SyntheticSpec};
use crate::ingest::{extract_patches, load_image, scan_dataset};
use crate::model::ModelContainer;
use crate::pipeline::{train_model, Retriever};

#[derive(Debug, Parser)]
#[command(name = "histsim", version, about = "Bag-of-words + NMF image retrieval with contextual ranking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a class-per-directory PGM corpus.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
    },
    /// Rank the database images of a model against a query image.
    Query {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Rank by pairwise cosine similarity instead of transduction.
        #[arg(long)]
        baseline: bool,
    },
    /// Cross-validate contextual and baseline ranking; write a CSV report.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic grating corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        classes: usize,
        #[arg(long = "per-class", default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image width and height in pixels.
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train {
            data,
            config,
            model,
        } => cmd_train(&data, config.as_deref(), &model, err),
        Command::Query {
            model,
            image,
            top,
            baseline,
        } => cmd_query(&model, &image, top, baseline, out),
        Command::Evaluate { data, config, out: report } => {
            cmd_evaluate(&data, config.as_deref(), &report, err)
        }
        Command::Synth {
            out: dir,
            classes,
            per_class,
            noise,
            seed,
            size,
        } => {
            let spec = SyntheticSpec {
                classes,
                per_class,
                image_size: size,
                noise_sigma: noise,
                seed,
            };
            cmd_synth(&dir, &spec, err)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn write_trace(err: &mut dyn Write, name: &str, trace: &[f64]) -> Result<()> {
    writeln!(err, "# {name}")?;
    writeln!(err, "iter,objective")?;
    for (i, v) in trace.iter().enumerate() {
        writeln!(err, "{i},{v}")?;
    }
    Ok(())
}

pub fn cmd_train(
    data: &Path,
    config: Option<&Path>,
    model_out: &Path,
    err: &mut dyn Write,
) -> Result<()> {
    let config = load_config(config)?;
    let dataset = scan_dataset(data)?;
    for w in &dataset.warnings {
        writeln!(err, "warning: {w}")?;
    }
    let (model, training) = train_model(&dataset, &config)?;
    write_trace(err, "kmeans", &training.kmeans_trace)?;
    write_trace(err, "nmf", &training.nmf_trace)?;
    model.save(model_out)?;
    writeln!(
        err,
        "# trained on {} images: {} words, rank {}",
        model.database_size(),
        model.codebook.k(),
        model.basis.rank()
    )?;
    Ok(())
}

pub fn cmd_query(
    model_path: &Path,
    image: &Path,
    top_n: usize,
    baseline: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let model = ModelContainer::load(model_path)?;
    let record = load_image(image)?;
    let patches = extract_patches(&record, model.config.patch_size, model.config.stride)?;
    let retriever = Retriever::from_model(&model)?;
    let query = retriever.represent(&patches)?;
    let scores = if baseline {
        retriever.baseline_scores(&query)?
    } else {
        retriever.contextual_scores(&query)?
    };
    for (r, idx) in rank(&scores).into_iter().take(top_n).enumerate() {
        writeln!(
            out,
            "{},{},{}",
            r + 1,
            model.ids[idx - 1],
            scores.as_slice()[idx]
        )?;
    }
    Ok(())
}

/// Path of the ROC dump for one fold and method, next to the report.
pub fn roc_path(report: &Path, fold: usize, method: &str) -> PathBuf {
    let stem = report
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}.fold{fold}.{method}.roc.csv"))
}

pub fn cmd_evaluate(
    data: &Path,
    config: Option<&Path>,
    report: &Path,
    err: &mut dyn Write,
) -> Result<()> {
    let config = load_config(config)?;
    let dataset = scan_dataset(data)?;
    let cv = run_cross_validation(&dataset, &config)?;
    for w in &cv.warnings {
        writeln!(err, "warning: {w}")?;
    }
    std::fs::write(report, cv.to_csv())?;
    for (f, roc) in cv.rocs.iter().enumerate() {
        std::fs::write(roc_path(report, f, "contextual"), roc.contextual.to_csv())?;
        std::fs::write(roc_path(report, f, "baseline"), roc.baseline.to_csv())?;
    }
    for r in [&cv.contextual, &cv.baseline] {
        writeln!(
            err,
            "# {}: mean auc {:.4} (std {:.4}), macro auc {:.4}",
            r.method, r.mean_auc, r.std_auc, r.mean_macro_auc
        )?;
    }
    Ok(())
}

pub fn cmd_synth(out_dir: &Path, spec: &SyntheticSpec, err: &mut dyn Write) -> Result<()> {
    let written = generate_synthetic_corpus(out_dir, spec).map_err(|e| match e {
        Error::BadConfig(_) | Error::Io(_) => e,
        other => Error::BadConfig(other.to_string()),
    })?;
    writeln!(
        err,
        "# wrote {} images in {} classes to {}",
        written.len(),
        spec.classes,
        out_dir.display()
    )?;
    Ok(())
}
