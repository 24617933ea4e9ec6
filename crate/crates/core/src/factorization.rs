//! Nonnegative matrix factorization of the histogram matrix.
//!
//! `V (K×N) ≈ W (K×R) · H (R×N)` under the squared Frobenius loss, solved
//! with the Lee–Seung multiplicative updates. Each column of `H` is the
//! new representation of one training image. New histograms are projected
//! onto a frozen basis by running the `H` update alone.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codebook::Histogram;
use crate::error::{Error, Result};

/// Guard added to every multiplicative-update denominator.
pub const NMF_EPS: f64 = 1e-12;

/// Histograms stacked as columns, `K×N`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramMatrix(Array2<f64>);

impl HistogramMatrix {
    pub fn from_histograms(histograms: &[Histogram]) -> Result<Self> {
        let k = histograms
            .first()
            .map(Histogram::len)
            .ok_or_else(|| Error::InvalidInput("no histograms to stack".into()))?;
        let mut v = Array2::zeros((k, histograms.len()));
        for (n, h) in histograms.iter().enumerate() {
            if h.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: h.len(),
                });
            }
            v.column_mut(n).assign(&ndarray::ArrayView1::from(h.bins()));
        }
        Ok(Self(v))
    }

    /// Checks nonnegativity and that each column sums to one within 1e-9.
    pub fn new(v: Array2<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidInput("empty histogram matrix".into()));
        }
        check_nonnegative(&v.view(), "V")?;
        for (n, col) in v.axis_iter(Axis(1)).enumerate() {
            let mass = col.sum();
            if (mass - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("column {n} sums to {mass}")));
            }
        }
        Ok(Self(v))
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Basis ("basic") matrix `W`, `K×R`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix(Array2<f64>);

impl BasisMatrix {
    pub fn new(w: Array2<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidInput("empty basis".into()));
        }
        check_nonnegative(&w.view(), "W")?;
        if w.axis_iter(Axis(1)).any(|c| c.iter().all(|&x| x == 0.0)) {
            return Err(Error::InvalidInput("basis has an all-zero column".into()));
        }
        Ok(Self(w))
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    /// Number of histogram bins `K`.
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn rank(&self) -> usize {
        self.0.ncols()
    }
}

/// Coefficient matrix `H`, `R×N`; column `n` represents image `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(Array2<f64>);

impl CoefficientMatrix {
    pub fn new(h: Array2<f64>) -> Result<Self> {
        check_nonnegative(&h.view(), "H")?;
        Ok(Self(h))
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        self.0.column(n).to_vec()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        self.0.axis_iter(Axis(1)).map(|c| c.to_vec()).collect()
    }
}

fn check_nonnegative(m: &ArrayView2<f64>, name: &str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidInput(format!(
            "{name} must be finite and nonnegative"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct NmfFit {
    pub basis: BasisMatrix,
    pub coefficients: CoefficientMatrix,
    /// Objective at initialization followed by one entry per sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl NmfFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// `‖V − WH‖²_F`.
pub fn reconstruction_error(v: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> Result<f64> {
    if w.ncols() != h.nrows() {
        return Err(Error::DimensionMismatch {
            expected: w.ncols(),
            got: h.nrows(),
        });
    }
    if v.nrows() != w.nrows() {
        return Err(Error::DimensionMismatch {
            expected: v.nrows(),
            got: w.nrows(),
        });
    }
    if v.ncols() != h.ncols() {
        return Err(Error::DimensionMismatch {
            expected: v.ncols(),
            got: h.ncols(),
        });
    }
    Ok(frobenius_sq(v, w, h))
}

fn frobenius_sq(v: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let wh = w.dot(h);
    v.iter().zip(wh.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn uniform_open_zero(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    // random() is in [0, 1); flipping it gives (0, 1]
    Array2::from_shape_simple_fn(shape, || 1.0 - rng.random::<f64>())
}

/// Alternating multiplicative updates, `H` first then `W`, starting from
/// uniform (0, 1] factors drawn from `seed`.
///
/// Stops when the relative objective decrease drops below `tol` or after
/// `max_iters` sweeps.
pub fn nmf_factorize(
    v: &Array2<f64>,
    rank: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<NmfFit> {
    let (k, n) = v.dim();
    if k == 0 || n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    check_nonnegative(&v.view(), "V")?;
    let limit = k.min(n);
    if rank == 0 || rank > limit {
        return Err(Error::RankTooLarge { rank, limit });
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidInput("tolerance must be >= 0".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = uniform_open_zero(&mut rng, (k, rank));
    let mut h = uniform_open_zero(&mut rng, (rank, n));

    let mut prev = frobenius_sq(v, &w, &h);
    if !prev.is_finite() {
        return Err(Error::NonFiniteObjective { iter: 0 });
    }
    let mut trace = vec![prev];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;

        let numer = w.t().dot(v);
        let denom = w.t().dot(&w).dot(&h);
        ndarray::Zip::from(&mut h)
            .and(&numer)
            .and(&denom)
            .for_each(|x, &a, &b| *x *= a / (b + NMF_EPS));
        debug_assert!(h.iter().all(|&x| x >= 0.0), "H went negative");

        let numer = v.dot(&h.t());
        let denom = w.dot(&h.dot(&h.t()));
        ndarray::Zip::from(&mut w)
            .and(&numer)
            .and(&denom)
            .for_each(|x, &a, &b| *x *= a / (b + NMF_EPS));
        debug_assert!(w.iter().all(|&x| x >= 0.0), "W went negative");

        let obj = frobenius_sq(v, &w, &h);
        if !obj.is_finite() {
            return Err(Error::NonFiniteObjective { iter: iterations });
        }
        trace.push(obj);
        if obj == 0.0 || (prev - obj) / prev < tol {
            break;
        }
        prev = obj;
    }

    // a collapsed basis column carries no information; floor it so the
    // basis stays usable for projection
    for mut col in w.axis_iter_mut(Axis(1)) {
        if col.iter().all(|&x| x == 0.0) {
            col.fill(NMF_EPS);
        }
    }

    Ok(NmfFit {
        basis: BasisMatrix(w),
        coefficients: CoefficientMatrix(h),
        objective_trace: trace,
        iterations,
    })
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub coefficients: Vec<f64>,
    /// `‖h − Wc‖²` at initialization and after each update.
    pub objective_trace: Vec<f64>,
}

impl Projection {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

fn residual_sq(h: &Array1<f64>, w: &Array2<f64>, c: &Array1<f64>) -> f64 {
    let wc = w.dot(c);
    h.iter().zip(wc.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Fits coefficients for one histogram against a frozen basis.
pub fn nmf_project(
    hist: &Histogram,
    basis: &BasisMatrix,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<Projection> {
    let w = basis.as_array();
    if hist.len() != w.nrows() {
        return Err(Error::DimensionMismatch {
            expected: w.nrows(),
            got: hist.len(),
        });
    }
    let h = Array1::from(hist.bins().to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Array1::from_shape_simple_fn(w.ncols(), || 1.0 - rng.random::<f64>());

    let wth = w.t().dot(&h);
    let wtw = w.t().dot(w);
    let mut prev = residual_sq(&h, w, &c);
    let mut trace = vec![prev];
    for iter in 1..=max_iters {
        let denom = wtw.dot(&c);
        ndarray::Zip::from(&mut c)
            .and(&wth)
            .and(&denom)
            .for_each(|x, &a, &b| *x *= a / (b + NMF_EPS));
        let obj = residual_sq(&h, w, &c);
        if !obj.is_finite() {
            return Err(Error::NonFiniteObjective { iter });
        }
        trace.push(obj);
        if obj == 0.0 || (prev - obj) / prev < tol {
            break;
        }
        prev = obj;
    }
    Ok(Projection {
        coefficients: c.to_vec(),
        objective_trace: trace,
    })
}
