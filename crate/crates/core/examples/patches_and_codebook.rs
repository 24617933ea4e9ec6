//! Dense patch extraction, k-means codebook training and quantization of
//! one image into a bag-of-words histogram.

use histsim::codebook::{quantize_image, train_codebook};
use histsim::eval::{synthetic_records, SyntheticSpec};
use histsim::ingest::{extract_all, patch_count};

fn main() -> histsim::Result<()> {
    let spec = SyntheticSpec {
        classes: 3,
        per_class: 4,
        image_size: 32,
        ..SyntheticSpec::default()
    };
    let records = synthetic_records(&spec)?;
    let (patch_size, stride) = (8, 4);
    let patches = extract_all(&records, patch_size, stride)?;
    println!(
        "{} images, {} patches each (expected {})",
        records.len(),
        patches[0].len(),
        patch_count(32, 32, patch_size, stride)
    );

    let pooled: Vec<_> = patches.iter().flatten().collect();
    let fit = train_codebook(&pooled, 16, 0, 50)?;
    println!(
        "k-means: {} iterations, converged {}, WCSS {:.3} -> {:.3}",
        fit.iterations,
        fit.converged,
        fit.objective_trace.first().unwrap(),
        fit.objective_trace.last().unwrap()
    );

    for (record, p) in records.iter().zip(&patches).step_by(spec.per_class) {
        let h = quantize_image(p, &fit.codebook)?;
        let bins: Vec<String> = h.bins().iter().map(|b| format!("{b:.2}")).collect();
        println!("{:>18}  [{}]", record.id, bins.join(" "));
    }
    Ok(())
}
