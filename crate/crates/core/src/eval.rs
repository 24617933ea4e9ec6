//! Cross-validated retrieval evaluation and the synthetic grating corpus.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::ingest::{encode_pgm, extract_all, ImageRecord, LabeledDataset, PatchDescriptor};
use crate::pipeline::{fit, Retriever};

/// Fold id of every record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
}

impl FoldAssignment {
    /// Record indices in fold `f`, ascending.
    pub fn members(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == f)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles `0..n` with `seed` and deals the permutation round-robin.
pub fn make_folds(n: usize, folds: usize, seed: u64) -> Result<FoldAssignment> {
    if folds == 0 || folds > n {
        return Err(Error::TooManyFolds { n, folds });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    Ok(FoldAssignment {
        fold_of,
        folds,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Scores `>= threshold` are called relevant. The origin uses +∞.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// `threshold,fpr,tpr` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
        }
        out
    }
}

/// Trapezoidal area under a sequence of ROC points.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// ROC curve from a threshold sweep over the distinct scores, highest
/// first. Tied scores move together, so the area equals the Mann–Whitney
/// statistic with ties counted as one half.
pub fn roc_curve(scores: &[f64], relevant: &[bool]) -> Result<RocCurve> {
    if scores.len() != relevant.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: relevant.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let pos = relevant.iter().filter(|&&r| r).count();
    let neg = relevant.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if relevant[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    // the lowest threshold admits everything, so the sweep ends at (1, 1)
    let auc = trapezoid_auc(&points);
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Contextual,
    Baseline,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Contextual => "contextual",
            Method::Baseline => "baseline",
        })
    }
}

/// Per-fold and summary AUCs of one scoring method.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    /// AUC of the ROC pooled over all queries of the fold.
    pub per_fold_auc: Vec<f64>,
    /// Mean of per-query AUCs within the fold.
    pub per_fold_macro_auc: Vec<f64>,
    pub mean_auc: f64,
    /// Sample standard deviation across folds.
    pub std_auc: f64,
    pub mean_macro_auc: f64,
    pub config: PipelineConfig,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

impl EvalReport {
    fn from_folds(
        method: Method,
        per_fold_auc: Vec<f64>,
        per_fold_macro_auc: Vec<f64>,
        config: &PipelineConfig,
    ) -> Self {
        Self {
            method,
            mean_auc: mean(&per_fold_auc),
            std_auc: sample_std(&per_fold_auc),
            mean_macro_auc: mean(&per_fold_macro_auc),
            per_fold_auc,
            per_fold_macro_auc,
            config: config.clone(),
        }
    }
}

/// ROC curves of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRoc {
    pub contextual: RocCurve,
    pub baseline: RocCurve,
}

/// Result of a full cross-validation run.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub contextual: EvalReport,
    pub baseline: EvalReport,
    pub fold_sizes: Vec<usize>,
    pub rocs: Vec<FoldRoc>,
    pub warnings: Vec<String>,
}

impl CrossValidation {
    /// `fold,method,auc,macro_auc` rows, contextual folds first, then
    /// baseline, then one `mean` row per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,method,auc,macro_auc\n");
        for report in [&self.contextual, &self.baseline] {
            for (f, (auc, macro_auc)) in report
                .per_fold_auc
                .iter()
                .zip(&report.per_fold_macro_auc)
                .enumerate()
            {
                let _ = writeln!(out, "{f},{},{auc},{macro_auc}", report.method);
            }
        }
        for report in [&self.contextual, &self.baseline] {
            let _ = writeln!(
                out,
                "mean,{},{},{}",
                report.method, report.mean_auc, report.mean_macro_auc
            );
        }
        out
    }
}

struct QueryScores {
    contextual: Vec<f64>,
    baseline: Vec<f64>,
    relevant: Vec<bool>,
}

fn evaluate_fold(
    classes: &[usize],
    patches: &[Vec<PatchDescriptor>],
    train: &[usize],
    test: &[usize],
    config: &PipelineConfig,
) -> Result<(RocCurve, RocCurve, f64, f64)> {
    let train_patches: Vec<&[PatchDescriptor]> =
        train.iter().map(|&i| patches[i].as_slice()).collect();
    let training = fit(&train_patches, config)?;
    let retriever = Retriever::new(
        &training.codebook,
        &training.basis,
        training.database.columns(),
        config,
    )?;

    let queries = test
        .par_iter()
        .map(|&q| -> Result<QueryScores> {
            let vec = retriever.represent(&patches[q])?;
            let contextual = retriever.contextual_scores(&vec)?.database().to_vec();
            let baseline = retriever.baseline_scores(&vec)?.database().to_vec();
            let relevant = train.iter().map(|&d| classes[d] == classes[q]).collect();
            Ok(QueryScores {
                contextual,
                baseline,
                relevant,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let relevant: Vec<bool> = queries.iter().flat_map(|q| q.relevant.iter().copied()).collect();
    let pooled = |pick: fn(&QueryScores) -> &Vec<f64>| -> Result<RocCurve> {
        let scores: Vec<f64> = queries.iter().flat_map(|q| pick(q).iter().copied()).collect();
        roc_curve(&scores, &relevant)
    };
    let macro_auc = |pick: fn(&QueryScores) -> &Vec<f64>| -> f64 {
        let aucs: Vec<f64> = queries
            .iter()
            .filter_map(|q| roc_curve(pick(q), &q.relevant).ok().map(|r| r.auc))
            .collect();
        if aucs.is_empty() {
            f64::NAN
        } else {
            mean(&aucs)
        }
    };
    Ok((
        pooled(|q| &q.contextual)?,
        pooled(|q| &q.baseline)?,
        macro_auc(|q| &q.contextual),
        macro_auc(|q| &q.baseline),
    ))
}

/// k-fold evaluation: each fold in turn queries a model trained on the
/// remaining folds, scoring every training image by contextual and by
/// cosine similarity over the same representation.
pub fn run_cross_validation(
    dataset: &LabeledDataset,
    config: &PipelineConfig,
) -> Result<CrossValidation> {
    config.validate()?;
    let n = dataset.len();
    let folds = make_folds(n, config.folds, config.seed)?;
    let classes = dataset.class_indices();
    let patches = extract_all(&dataset.records, config.patch_size, config.stride)?;
    let mut warnings = dataset.warnings.clone();

    let mut ctx_auc = Vec::with_capacity(folds.folds);
    let mut ctx_macro = Vec::with_capacity(folds.folds);
    let mut base_auc = Vec::with_capacity(folds.folds);
    let mut base_macro = Vec::with_capacity(folds.folds);
    let mut rocs = Vec::with_capacity(folds.folds);
    for f in 0..folds.folds {
        let test = folds.members(f);
        let train: Vec<usize> = (0..n).filter(|&i| folds.fold_of[i] != f).collect();
        let present: BTreeSet<usize> = train.iter().map(|&i| classes[i]).collect();
        for (c, name) in dataset.classes.iter().enumerate() {
            if !present.contains(&c) {
                warnings.push(format!("fold {f}: training set has no images of class '{name}'"));
            }
        }
        let (ctx, base, ctx_m, base_m) =
            evaluate_fold(&classes, &patches, &train, &test, config).map_err(|e| {
                Error::InFold {
                    fold: f,
                    source: Box::new(e),
                }
            })?;
        ctx_auc.push(ctx.auc);
        base_auc.push(base.auc);
        ctx_macro.push(ctx_m);
        base_macro.push(base_m);
        rocs.push(FoldRoc {
            contextual: ctx,
            baseline: base,
        });
    }

    Ok(CrossValidation {
        contextual: EvalReport::from_folds(Method::Contextual, ctx_auc, ctx_macro, config),
        baseline: EvalReport::from_folds(Method::Baseline, base_auc, base_macro, config),
        fold_sizes: folds.sizes(),
        rocs,
        warnings,
    })
}

/// Parameters of the synthetic grating corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub image_size: usize,
    /// Pixel noise standard deviation as a fraction of 255.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 40,
            per_class: 50,
            image_size: 64,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.per_class == 0 || self.image_size == 0 {
            return Err(Error::BadConfig(
                "classes, per_class and image_size must be positive".into(),
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::BadConfig("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Grating orientation of class `c`, radians.
    pub fn orientation(&self, c: usize) -> f64 {
        c as f64 * PI / self.classes as f64
    }

    /// Grating frequency of class `c`, cycles per pixel.
    pub fn frequency(&self, c: usize) -> f64 {
        0.1 + 0.02 * (c % 5) as f64
    }

    pub fn class_name(&self, c: usize) -> String {
        format!("class_{c:0w$}", w = digits(self.classes - 1).max(2))
    }

    pub fn file_name(&self, i: usize) -> String {
        format!("{i:0w$}.pgm", w = digits(self.per_class - 1).max(3))
    }
}

fn digits(n: usize) -> usize {
    n.to_string().len()
}

/// Generates every image in class-major order. Noise is drawn from one
/// stream seeded by `spec.seed`.
pub fn synthetic_records(spec: &SyntheticSpec) -> Result<Vec<ImageRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma * 255.0)
        .map_err(|e| Error::BadConfig(format!("noise: {e}")))?;
    let s = spec.image_size;
    let mut records = Vec::with_capacity(spec.classes * spec.per_class);
    for c in 0..spec.classes {
        let (sin_t, cos_t) = spec.orientation(c).sin_cos();
        let nu = spec.frequency(c);
        let clean: Vec<f64> = (0..s * s)
            .map(|p| {
                let (x, y) = ((p % s) as f64, (p / s) as f64);
                127.5 + 127.5 * (2.0 * PI * nu * (x * cos_t + y * sin_t)).sin()
            })
            .collect();
        let class = spec.class_name(c);
        for i in 0..spec.per_class {
            let pixels = clean
                .iter()
                .map(|&v| {
                    let v = if spec.noise_sigma > 0.0 {
                        v + noise.sample(&mut rng)
                    } else {
                        v
                    };
                    v.round().clamp(0.0, 255.0) as u8
                })
                .collect();
            records.push(ImageRecord::new(
                format!("{class}/{}", spec.file_name(i)),
                class.clone(),
                s,
                s,
                pixels,
            )?);
        }
    }
    Ok(records)
}

/// The synthetic corpus held in memory, identical to scanning what
/// [`generate_synthetic_corpus`] writes.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    LabeledDataset::from_records(synthetic_records(spec)?)
}

/// Writes the corpus as `<out>/<class>/<index>.pgm` and returns the paths
/// written.
pub fn generate_synthetic_corpus(out: &Path, spec: &SyntheticSpec) -> Result<Vec<PathBuf>> {
    let records = synthetic_records(spec)?;
    let mut written = Vec::with_capacity(records.len());
    for r in &records {
        let path = out.join(&r.id);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, encode_pgm(r.width, r.height, &r.pixels))?;
        written.push(path);
    }
    Ok(written)
}
