//! Cross-validated retrieval on an in-memory synthetic corpus, comparing
//! contextual (graph transduction) ranking with pairwise cosine ranking.
//!
//! ```text
//! cargo run --release --example cross_validation -- [classes] [per_class] [noise]
//! ```

use std::time::Instant;

use histsim::eval::{run_cross_validation, synthetic_dataset, SyntheticSpec};
use histsim::PipelineConfig;

fn main() -> histsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let classes = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let per_class = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let noise_sigma = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.05);

    let spec = SyntheticSpec {
        classes,
        per_class,
        image_size: 64,
        noise_sigma,
        seed: 3,
    };
    let dataset = synthetic_dataset(&spec)?;
    let config = PipelineConfig {
        codebook_k: 100,
        nmf_rank: 30,
        folds: 5,
        ..PipelineConfig::default()
    };

    let start = Instant::now();
    let cv = run_cross_validation(&dataset, &config)?;
    for w in &cv.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", cv.to_csv());
    println!(
        "# {} images, {} classes, fold sizes {:?}, {:.1?}",
        dataset.len(),
        dataset.classes.len(),
        cv.fold_sizes,
        start.elapsed()
    );
    println!(
        "# contextual {:.4} ± {:.4}   baseline {:.4} ± {:.4}",
        cv.contextual.mean_auc, cv.contextual.std_auc, cv.baseline.mean_auc, cv.baseline.std_auc
    );
    Ok(())
}
