//! ROC curve and AUC for a handful of scored items, with the threshold
//! sweep printed as CSV.

use histsim::eval::roc_curve;

fn main() -> histsim::Result<()> {
    let scores = [0.95, 0.9, 0.8, 0.8, 0.6, 0.55, 0.4, 0.3, 0.2, 0.1];
    let relevant = [true, true, false, true, true, false, false, true, false, false];
    let roc = roc_curve(&scores, &relevant)?;
    print!("{}", roc.to_csv());
    println!("auc = {:.4}", roc.auc);
    Ok(())
}
