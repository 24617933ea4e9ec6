//! Contextual similarity by graph transduction.
//!
//! The query's coefficient vector joins the database as node 0 of a
//! directed k-nearest-neighbor graph with Gaussian edge weights. Rows are
//! normalized into a transition matrix, and a score of 1 pinned on the
//! query is diffused through it for a fixed number of steps:
//!
//! ```text
//! f₀ = e₀,   f_t(i) = Σ_j P_ij f_{t-1}(j)  (i ≥ 1),   f_t(0) = 1
//! ```
//!
//! The resulting `f_T(i)` is the probability-like affinity of database
//! image `i` to the query, taking the shape of the whole database into
//! account.

use rayon::prelude::*;

use crate::codebook::squared_distance;
use crate::error::{Error, Result};

/// How the Gaussian kernel bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SigmaMode {
    /// Mean distance from each node to its k-th nearest neighbor.
    #[default]
    Auto,
    Fixed(f64),
}

/// Directed kNN graph with Gaussian weights. Row `i` lists its neighbors
/// nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    pub k: usize,
    pub sigma: f64,
    rows: Vec<Vec<(usize, f64)>>,
}

impl AffinityGraph {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Row-normalizes the weights. A row with no positive weight becomes a
    /// self-transition.
    pub fn transition(&self) -> TransitionMatrix {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: f64 = row.iter().map(|&(_, w)| w).sum();
                if total > 0.0 {
                    row.iter()
                        .filter(|&&(_, w)| w > 0.0)
                        .map(|&(j, w)| (j, w / total))
                        .collect()
                } else {
                    vec![(i, 1.0)]
                }
            })
            .collect();
        TransitionMatrix { rows }
    }
}

/// Sparse row-stochastic matrix over the query (node 0) and the database.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionMatrix {
    /// Builds from a dense matrix, keeping nonzero entries. Rows must sum
    /// to one within 1e-9 with entries in `[0, 1]`.
    pub fn from_dense(p: &[Vec<f64>]) -> Result<Self> {
        let n = p.len();
        let mut rows = Vec::with_capacity(n);
        for (i, row) in p.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            if row.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidInput(format!("row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("row {i} sums to {sum}")));
            }
            rows.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, &x)| x > 0.0)
                    .map(|(j, &x)| (j, x))
                    .collect(),
            );
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|&&(c, _)| c == j)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; n];
                for &(j, p) in row {
                    dense[j] += p;
                }
                dense
            })
            .collect()
    }
}

/// Scores over the query (index 0) and database nodes `1..=N`, all in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("scores must lie in [0, 1]".into()));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Scores of database nodes `1..=N`.
    pub fn database(&self) -> &[f64] {
        &self.0[1..]
    }
}

/// `k` nearest other nodes of `i`, as `(index, squared distance)`, nearest
/// first with ties to the lower index.
fn knn_row(vectors: &[Vec<f64>], i: usize, k: usize) -> Vec<(usize, f64)> {
    let mut cands: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, v)| (j, squared_distance(&vectors[i], v)))
        .collect();
    sort_neighbors(&mut cands);
    cands.truncate(k);
    cands
}

fn sort_neighbors(cands: &mut [(usize, f64)]) {
    cands.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}

fn check_vectors(vectors: &[Vec<f64>], k: usize) -> Result<()> {
    if vectors.len() < 2 {
        return Err(Error::InvalidInput("graph needs at least 2 nodes".into()));
    }
    let available = vectors.len() - 1;
    if k == 0 || k > available {
        return Err(Error::KTooLarge { k, available });
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    Ok(())
}

fn resolve_sigma(mode: SigmaMode, knn: &[Vec<(usize, f64)>]) -> Result<f64> {
    match mode {
        SigmaMode::Fixed(s) if s.is_finite() && s > 0.0 => Ok(s),
        SigmaMode::Fixed(s) => Err(Error::InvalidInput(format!("sigma {s} must be positive"))),
        SigmaMode::Auto => {
            let total: f64 = knn
                .iter()
                .map(|row| row.last().map_or(0.0, |&(_, d2)| d2.sqrt()))
                .sum();
            let mean = total / knn.len() as f64;
            Ok(if mean > 0.0 { mean } else { 1.0 })
        }
    }
}

fn weigh(knn: Vec<Vec<(usize, f64)>>, k: usize, sigma: f64) -> AffinityGraph {
    let s2 = sigma * sigma;
    let rows = knn
        .into_iter()
        .map(|row| row.into_iter().map(|(j, d2)| (j, (-d2 / s2).exp())).collect())
        .collect();
    AffinityGraph { k, sigma, rows }
}

/// Directed kNN graph over `vectors` (node 0 is the query).
pub fn build_affinity(vectors: &[Vec<f64>], k: usize, sigma: SigmaMode) -> Result<AffinityGraph> {
    check_vectors(vectors, k)?;
    let knn: Vec<Vec<(usize, f64)>> = (0..vectors.len())
        .into_par_iter()
        .map(|i| knn_row(vectors, i, k))
        .collect();
    let sigma = resolve_sigma(sigma, &knn)?;
    Ok(weigh(knn, k, sigma))
}

/// `w_ij = exp(−d(x_i, x_j)² / σ²)` on each node's `k` nearest neighbors,
/// row-normalized.
pub fn build_graph(vectors: &[Vec<f64>], k: usize, sigma: SigmaMode) -> Result<TransitionMatrix> {
    Ok(build_affinity(vectors, k, sigma)?.transition())
}

/// Database side of the query graph, precomputed once and shared across
/// queries.
///
/// Each database node's neighbor list among the other database nodes is
/// kept, so attaching a query only needs the query's own distances. The
/// resulting graph is identical to [`build_graph`] on `[query, database..]`.
#[derive(Debug, Clone)]
pub struct DatabaseGraph {
    vectors: Vec<Vec<f64>>,
    k: usize,
    sigma: SigmaMode,
    /// Up to `k` nearest database neighbors of each database node, indexed
    /// in query-graph numbering (database node `j` is `j + 1`).
    db_knn: Vec<Vec<(usize, f64)>>,
}

impl DatabaseGraph {
    pub fn new(database: Vec<Vec<f64>>, k: usize, sigma: SigmaMode) -> Result<Self> {
        if database.is_empty() {
            return Err(Error::InvalidInput("empty database".into()));
        }
        let available = database.len();
        if k == 0 || k > available {
            return Err(Error::KTooLarge { k, available });
        }
        if let SigmaMode::Fixed(s) = sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidInput(format!("sigma {s} must be positive")));
            }
        }
        if database.len() >= 2 {
            check_vectors(&database, 1)?;
        }
        let db_knn = (0..database.len())
            .into_par_iter()
            .map(|j| {
                knn_row(&database, j, k)
                    .into_iter()
                    .map(|(c, d2)| (c + 1, d2))
                    .collect()
            })
            .collect();
        Ok(Self {
            vectors: database,
            k,
            sigma,
            db_knn,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn affinity_with_query(&self, query: &[f64]) -> Result<AffinityGraph> {
        let dim = self.vectors[0].len();
        if query.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: query.len(),
            });
        }
        if query.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        let mut knn = Vec::with_capacity(self.len() + 1);
        let mut query_row: Vec<(usize, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(j, v)| (j + 1, squared_distance(query, v)))
            .collect();
        sort_neighbors(&mut query_row);
        query_row.truncate(self.k);
        knn.push(query_row);
        for (j, v) in self.vectors.iter().enumerate() {
            let mut row = Vec::with_capacity(self.db_knn[j].len() + 1);
            row.push((0, squared_distance(v, query)));
            row.extend_from_slice(&self.db_knn[j]);
            sort_neighbors(&mut row);
            row.truncate(self.k);
            knn.push(row);
        }
        let sigma = resolve_sigma(self.sigma, &knn)?;
        Ok(weigh(knn, self.k, sigma))
    }

    pub fn transition_with_query(&self, query: &[f64]) -> Result<TransitionMatrix> {
        Ok(self.affinity_with_query(query)?.transition())
    }
}

/// Diffuses the clamped query score for `steps` iterations.
pub fn transduce(p: &TransitionMatrix, steps: usize) -> Result<ScoreVector> {
    if p.is_empty() {
        return Err(Error::InvalidInput("empty transition matrix".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidInput("transduction needs at least one step".into()));
    }
    let n = p.len();
    let mut f = vec![0.0; n];
    f[0] = 1.0;
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        next[0] = 1.0;
        for i in 1..n {
            let s: f64 = p.row(i).iter().map(|&(j, pij)| pij * f[j]).sum();
            next[i] = s.clamp(0.0, 1.0);
        }
        std::mem::swap(&mut f, &mut next);
    }
    Ok(ScoreVector(f))
}

/// Database indices `1..=N` by descending score, ties to the lower index.
pub fn rank(scores: &ScoreVector) -> Vec<usize> {
    let f = scores.as_slice();
    let mut order: Vec<usize> = (1..f.len()).collect();
    order.sort_by(|&a, &b| f[b].total_cmp(&f[a]).then(a.cmp(&b)));
    order
}

/// Pairwise cosine similarity mapped to `[0, 1]` via `(c + 1) / 2`.
/// A zero-norm vector scores 0.5.
pub fn baseline_cosine_scores(query: &[f64], database: &[Vec<f64>]) -> Result<ScoreVector> {
    let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut f = Vec::with_capacity(database.len() + 1);
    f.push(1.0);
    for x in database {
        if x.len() != query.len() {
            return Err(Error::DimensionMismatch {
                expected: query.len(),
                got: x.len(),
            });
        }
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let score = if qn == 0.0 || xn == 0.0 {
            0.5
        } else {
            let dot: f64 = query.iter().zip(x).map(|(a, b)| a * b).sum();
            ((dot / (qn * xn)).clamp(-1.0, 1.0) + 1.0) / 2.0
        };
        f.push(score);
    }
    Ok(ScoreVector(f))
}
