//! End-to-end training and querying: patches → codebook → histograms →
//! NMF, then per query histogram → projection → graph transduction.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::codebook::{quantize_image, train_codebook, Codebook, Histogram};
use crate::config::{DatabaseCoefficients, PipelineConfig};
use crate::context::{baseline_cosine_scores, transduce, DatabaseGraph, ScoreVector};
use crate::error::Result;
use crate::factorization::{
    nmf_factorize, nmf_project, BasisMatrix, CoefficientMatrix, HistogramMatrix,
};
use crate::ingest::{extract_all, LabeledDataset, PatchDescriptor};
use crate::model::ModelContainer;

/// Everything learned from one training set.
#[derive(Debug, Clone)]
pub struct Training {
    pub codebook: Codebook,
    pub basis: BasisMatrix,
    /// `H` from the factorization.
    pub coefficients: CoefficientMatrix,
    /// Columns the database is ranked with; see
    /// [`DatabaseCoefficients`].
    pub database: CoefficientMatrix,
    pub kmeans_trace: Vec<f64>,
    pub nmf_trace: Vec<f64>,
}

/// Fits codebook and factorization on the patch sets of the training
/// images, in order.
pub fn fit(patches: &[&[PatchDescriptor]], config: &PipelineConfig) -> Result<Training> {
    let pooled: Vec<&PatchDescriptor> = patches.iter().flat_map(|p| p.iter()).collect();
    let kmeans = train_codebook(
        &pooled,
        config.codebook_k,
        config.seed,
        config.kmeans_max_iters,
    )?;
    let histograms = patches
        .par_iter()
        .map(|p| quantize_image(p, &kmeans.codebook))
        .collect::<Result<Vec<_>>>()?;
    let v = HistogramMatrix::from_histograms(&histograms)?;
    let nmf = nmf_factorize(
        v.as_array(),
        config.nmf_rank,
        config.nmf_max_iters,
        config.nmf_tol,
        config.seed,
    )?;
    let database = match config.database_coefficients {
        DatabaseCoefficients::Trained => nmf.coefficients.clone(),
        DatabaseCoefficients::Projected => {
            let columns = histograms
                .par_iter()
                .map(|h| project(h, &nmf.basis, config))
                .collect::<Result<Vec<_>>>()?;
            let mut m = Array2::zeros((config.nmf_rank, columns.len()));
            for (n, c) in columns.iter().enumerate() {
                m.column_mut(n).assign(&ArrayView1::from(c.as_slice()));
            }
            CoefficientMatrix::new(m)?
        }
    };
    Ok(Training {
        codebook: kmeans.codebook,
        basis: nmf.basis,
        coefficients: nmf.coefficients,
        database,
        kmeans_trace: kmeans.objective_trace,
        nmf_trace: nmf.objective_trace,
    })
}

/// Coefficients of one histogram against a frozen basis, as used for
/// queries.
pub fn project(hist: &Histogram, basis: &BasisMatrix, config: &PipelineConfig) -> Result<Vec<f64>> {
    Ok(nmf_project(
        hist,
        basis,
        config.nmf_max_iters,
        config.nmf_tol,
        config.seed,
    )?
    .coefficients)
}

/// Trains on a whole dataset and packages the result as a model.
pub fn train_model(
    dataset: &LabeledDataset,
    config: &PipelineConfig,
) -> Result<(ModelContainer, Training)> {
    config.validate()?;
    let patches = extract_all(&dataset.records, config.patch_size, config.stride)?;
    let refs: Vec<&[PatchDescriptor]> = patches.iter().map(Vec::as_slice).collect();
    let training = fit(&refs, config)?;
    let model = ModelContainer::new(
        training.codebook.clone(),
        training.basis.clone(),
        training.database.clone(),
        dataset.records.iter().map(|r| r.id.clone()).collect(),
        config.clone(),
    )?;
    Ok((model, training))
}

/// Scores queries against a fixed database of coefficient vectors.
#[derive(Debug)]
pub struct Retriever<'a> {
    codebook: &'a Codebook,
    basis: &'a BasisMatrix,
    config: &'a PipelineConfig,
    graph: DatabaseGraph,
}

impl<'a> Retriever<'a> {
    pub fn new(
        codebook: &'a Codebook,
        basis: &'a BasisMatrix,
        database: Vec<Vec<f64>>,
        config: &'a PipelineConfig,
    ) -> Result<Self> {
        let graph = DatabaseGraph::new(database, config.graph_k, config.sigma_mode)?;
        Ok(Self {
            codebook,
            basis,
            config,
            graph,
        })
    }

    pub fn from_model(model: &'a ModelContainer) -> Result<Self> {
        Self::new(
            &model.codebook,
            &model.basis,
            model.coefficients.columns(),
            &model.config,
        )
    }

    pub fn database(&self) -> &[Vec<f64>] {
        self.graph.vectors()
    }

    pub fn histogram(&self, patches: &[PatchDescriptor]) -> Result<Histogram> {
        quantize_image(patches, self.codebook)
    }

    /// Coefficient vector of a query image.
    pub fn represent(&self, patches: &[PatchDescriptor]) -> Result<Vec<f64>> {
        project(&self.histogram(patches)?, self.basis, self.config)
    }

    pub fn contextual_scores(&self, query: &[f64]) -> Result<ScoreVector> {
        let p = self.graph.transition_with_query(query)?;
        transduce(&p, self.config.transduce_iters)
    }

    pub fn baseline_scores(&self, query: &[f64]) -> Result<ScoreVector> {
        baseline_cosine_scores(query, self.graph.vectors())
    }
}
