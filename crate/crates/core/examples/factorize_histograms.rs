//! Factorizes a histogram matrix with multiplicative-update NMF and
//! projects a held-out histogram onto the learned basis.

use histsim::codebook::Histogram;
use histsim::factorization::{nmf_factorize, nmf_project, HistogramMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_histogram(rng: &mut ChaCha8Rng, k: usize) -> histsim::Result<Histogram> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(3)).collect();
    let total: f64 = raw.iter().sum();
    Histogram::new(raw.into_iter().map(|x| x / total).collect())
}

fn main() -> histsim::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (k, n, rank) = (20, 30, 4);
    let histograms = (0..n)
        .map(|_| random_histogram(&mut rng, k))
        .collect::<histsim::Result<Vec<_>>>()?;
    let v = HistogramMatrix::from_histograms(&histograms)?;

    let fit = nmf_factorize(v.as_array(), rank, 500, 1e-8, 0)?;
    println!("sweeps {}, objective trace:", fit.iterations);
    for (i, f) in fit.objective_trace.iter().enumerate().step_by(50) {
        println!("  {i:4}  {f:.6e}");
    }
    println!("  final {:.6e}", fit.objective());

    let query = random_histogram(&mut rng, k)?;
    let proj = nmf_project(&query, &fit.basis, 500, 1e-8, 0)?;
    println!(
        "projected query: coefficients {:.4?}, residual {:.4e}",
        proj.coefficients,
        proj.objective()
    );
    Ok(())
}
