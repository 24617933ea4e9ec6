//! Writes a small synthetic grating corpus and scans it back.
//!
//! ```text
//! cargo run --example synth_corpus -- [out_dir]
//! ```

use std::path::PathBuf;

use histsim::eval::{generate_synthetic_corpus, SyntheticSpec};
use histsim::ingest::scan_dataset;

fn main() -> histsim::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("histsim-synth"));
    let spec = SyntheticSpec {
        classes: 4,
        per_class: 5,
        image_size: 32,
        ..SyntheticSpec::default()
    };
    let written = generate_synthetic_corpus(&out, &spec)?;
    println!("wrote {} images under {}", written.len(), out.display());
    for c in 0..spec.classes {
        println!(
            "  {}: orientation {:.1}°, {:.2} cycles/pixel",
            spec.class_name(c),
            spec.orientation(c).to_degrees(),
            spec.frequency(c)
        );
    }

    let dataset = scan_dataset(&out)?;
    println!("scanned {} records in {} classes", dataset.len(), dataset.classes.len());
    Ok(())
}
