//! Trains a model on an in-memory corpus, saves and reloads it, then ranks
//! the database against a fresh noisy image of one class.

use histsim::context::rank;
use histsim::eval::{synthetic_dataset, synthetic_records, SyntheticSpec};
use histsim::ingest::extract_patches;
use histsim::pipeline::{train_model, Retriever};
use histsim::{ModelContainer, PipelineConfig};

fn main() -> histsim::Result<()> {
    let spec = SyntheticSpec {
        classes: 5,
        per_class: 8,
        image_size: 48,
        ..SyntheticSpec::default()
    };
    let dataset = synthetic_dataset(&spec)?;
    let config = PipelineConfig {
        codebook_k: 60,
        nmf_rank: 12,
        ..PipelineConfig::default()
    };
    let (model, training) = train_model(&dataset, &config)?;
    println!(
        "trained on {} images: k-means {} iterations, NMF {} sweeps",
        model.database_size(),
        training.kmeans_trace.len(),
        training.nmf_trace.len() - 1
    );

    let path = std::env::temp_dir().join("histsim-example.hskm");
    model.save(&path)?;
    let model = ModelContainer::load(&path)?;
    println!("model file {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    // a new draw of the same gratings
    let fresh = synthetic_records(&SyntheticSpec { seed: 99, ..spec })?;
    let query = &fresh[2 * spec.per_class];
    let patches = extract_patches(query, model.config.patch_size, model.config.stride)?;
    let retriever = Retriever::from_model(&model)?;
    let coefficients = retriever.represent(&patches)?;

    for (name, scores) in [
        ("contextual", retriever.contextual_scores(&coefficients)?),
        ("cosine", retriever.baseline_scores(&coefficients)?),
    ] {
        println!("{name} top 5 for {}:", query.id);
        for (r, idx) in rank(&scores).into_iter().take(5).enumerate() {
            println!("  {} {} {:.4}", r + 1, model.ids[idx - 1], scores.as_slice()[idx]);
        }
    }
    Ok(())
}
