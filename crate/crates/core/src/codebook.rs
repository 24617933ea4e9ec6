//! Visual codebook learned with Lloyd's k-means, and hard-assignment
//! quantization of an image's patches into an L1-normalized histogram.

use std::collections::HashSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::PatchDescriptor;

/// Largest centroid displacement below which training stops.
pub const MOVEMENT_TOL: f64 = 1e-6;

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance if it is strictly below `bound`. Terms are summed in
/// the same order as [`squared_distance`], so an accepted value is
/// bit-identical to it; the sum is abandoned once it reaches `bound`.
#[inline]
fn distance_below(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
    let mut acc = 0.0;
    for (xs, ys) in a.chunks(8).zip(b.chunks(8)) {
        for (x, y) in xs.iter().zip(ys) {
            acc += (x - y) * (x - y);
        }
        if acc >= bound {
            return None;
        }
    }
    Some(acc)
}

/// `K` visual words of dimension `D`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Array2<f64>,
}

impl Codebook {
    pub fn new(centroids: Array2<f64>) -> Result<Self> {
        let (k, d) = centroids.dim();
        if k == 0 || d == 0 {
            return Err(Error::InvalidInput("codebook must be at least 1x1".into()));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("codebook has non-finite entries".into()));
        }
        Ok(Self {
            centroids: centroids.as_standard_layout().into_owned(),
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        self.centroids
            .row(j)
            .to_slice()
            .expect("centroids are stored row-major")
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    /// Index of the nearest centroid and its squared distance. Ties go to
    /// the lowest index.
    fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for j in 0..self.k() {
            if let Some(d) = distance_below(x, self.centroid(j), best.1) {
                best = (j, d);
            }
        }
        best
    }
}

/// Per-image bag-of-words histogram; bins are nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram(Vec<f64>);

impl Histogram {
    /// Validates nonnegativity and unit L1 mass (within 1e-9).
    pub fn new(bins: Vec<f64>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::InvalidInput("histogram has no bins".into()));
        }
        if bins.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::InvalidInput("histogram bins must be finite and >= 0".into()));
        }
        let mass: f64 = bins.iter().sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("histogram mass {mass} is not 1")));
        }
        Ok(Self(bins))
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyPatchSet);
        }
        Ok(Self(
            counts.iter().map(|&c| c as f64 / total as f64).collect(),
        ))
    }

    pub fn bins(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Outcome of codebook training.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn check_dims<D: AsRef<[f64]>>(descriptors: &[D]) -> Result<usize> {
    let dim = descriptors
        .first()
        .map(|d| d.as_ref().len())
        .ok_or(Error::TooFewDescriptors { k: 1, distinct: 0 })?;
    if dim == 0 {
        return Err(Error::InvalidInput("descriptors have dimension 0".into()));
    }
    for d in descriptors {
        let d = d.as_ref();
        if d.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: d.len(),
            });
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("descriptor has non-finite entries".into()));
        }
    }
    Ok(dim)
}

/// Counts distinct descriptors, stopping once `limit` is reached.
fn distinct_at_least<D: AsRef<[f64]>>(descriptors: &[D], limit: usize) -> usize {
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for d in descriptors {
        // + 0.0 folds -0.0 into 0.0
        seen.insert(d.as_ref().iter().map(|v| (v + 0.0).to_bits()).collect());
        if seen.len() >= limit {
            break;
        }
    }
    seen.len()
}

fn plus_plus_seed(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .par_iter()
        .map(|p| squared_distance(p, points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        // total > 0 because at least k distinct points exist
        let next = pick.expect("a point with positive distance remains");
        chosen.push(next);
        let c = points[next];
        d2.par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(w, p)| *w = w.min(squared_distance(p, c)));
    }
    chosen
}

/// Lloyd's k-means with k-means++ seeding.
///
/// Stops when no assignment changes, the largest centroid move falls below
/// [`MOVEMENT_TOL`], or after `max_iters` iterations. A cluster left empty
/// is moved onto the point farthest from its assigned centroid.
pub fn train_codebook<D: AsRef<[f64]> + Sync>(
    descriptors: &[D],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansFit> {
    if k == 0 || max_iters == 0 {
        return Err(Error::InvalidInput("k and max_iters must be positive".into()));
    }
    let dim = check_dims(descriptors)?;
    let distinct = distinct_at_least(descriptors, k);
    if distinct < k {
        return Err(Error::TooFewDescriptors { k, distinct });
    }
    let points: Vec<&[f64]> = descriptors.iter().map(AsRef::as_ref).collect();
    let n = points.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = plus_plus_seed(&points, k, &mut rng);
    let mut centroids = Array2::zeros((k, dim));
    for (j, &i) in seeds.iter().enumerate() {
        centroids.row_mut(j).assign(&ndarray::ArrayView1::from(points[i]));
    }
    let mut codebook = Codebook { centroids };

    let mut assignment = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let nearest: Vec<(usize, f64)> = points.par_iter().map(|p| codebook.nearest(p)).collect();
        let changed = nearest
            .iter()
            .zip(&assignment)
            .filter(|((j, _), a)| j != *a)
            .count();
        let mut dists: Vec<f64> = nearest.iter().map(|&(_, d)| d).collect();
        for (a, (j, _)) in assignment.iter_mut().zip(&nearest) {
            *a = *j;
        }

        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assignment) {
            counts[j] += 1;
            let mut row = sums.row_mut(j);
            for (s, v) in row.iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        let mut movement = 0.0f64;
        for j in 0..k {
            let old = codebook.centroid(j).to_vec();
            if counts[j] > 0 {
                let inv = counts[j] as f64;
                let mut row = codebook.centroids.row_mut(j);
                for (c, s) in row.iter_mut().zip(sums.row(j)) {
                    *c = s / inv;
                }
            } else {
                // farthest point from its own centroid; ties to the lowest index
                let far = (0..n)
                    .fold(0, |best, i| if dists[i] > dists[best] { i } else { best });
                dists[far] = f64::NEG_INFINITY;
                codebook
                    .centroids
                    .row_mut(j)
                    .assign(&ndarray::ArrayView1::from(points[far]));
            }
            movement = movement.max(squared_distance(&old, codebook.centroid(j)).sqrt());
        }

        let per_point: Vec<f64> = points
            .par_iter()
            .zip(assignment.par_iter())
            .map(|(p, &j)| squared_distance(p, codebook.centroid(j)))
            .collect();
        let objective: f64 = per_point.iter().sum();
        trace.push(objective);

        if changed == 0 || movement < MOVEMENT_TOL {
            converged = true;
            break;
        }
    }

    Ok(KMeansFit {
        codebook,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Nearest visual word by Euclidean distance, lowest index on ties.
pub fn assign(descriptor: &PatchDescriptor, codebook: &Codebook) -> Result<usize> {
    if descriptor.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            got: descriptor.dim(),
        });
    }
    Ok(codebook.nearest(descriptor.as_slice()).0)
}

/// Fraction of the image's patches assigned to each visual word.
pub fn quantize_image(descriptors: &[PatchDescriptor], codebook: &Codebook) -> Result<Histogram> {
    if descriptors.is_empty() {
        return Err(Error::EmptyPatchSet);
    }
    let mut counts = vec![0usize; codebook.k()];
    for d in descriptors {
        counts[assign(d, codebook)?] += 1;
    }
    Histogram::from_counts(&counts)
}
