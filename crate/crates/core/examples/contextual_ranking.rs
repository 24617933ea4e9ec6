//! Graph transduction versus pairwise cosine on a toy database with two
//! clusters. Cluster A is a chain of points starting next to the query and
//! bending away from its direction; cluster B points the same way as the
//! query but lies far from it. Cosine prefers B, while transduction follows
//! the chain and ranks all of A first.

use histsim::context::{baseline_cosine_scores, build_graph, rank, transduce, SigmaMode};

fn main() -> histsim::Result<()> {
    let query = vec![1.0, 0.1];
    let mut database: Vec<Vec<f64>> = (0..8).map(|i| vec![1.0, 0.2 + 0.4 * i as f64]).collect();
    database.extend((0..4).map(|i| vec![3.0 + 0.1 * i as f64, 0.3]));

    let mut nodes = vec![query.clone()];
    nodes.extend(database.iter().cloned());
    let p = build_graph(&nodes, 2, SigmaMode::Auto)?;
    let contextual = transduce(&p, 20)?;
    let cosine = baseline_cosine_scores(&query, &database)?;

    println!("{:>4} {:>12} {:>10} {:>10}", "node", "vector", "transduce", "cosine");
    for (i, v) in database.iter().enumerate() {
        println!(
            "{:>4} {:>12} {:>10.4} {:>10.4}",
            i + 1,
            format!("{v:.1?}"),
            contextual.as_slice()[i + 1],
            cosine.as_slice()[i + 1]
        );
    }
    println!("contextual ranking: {:?}", rank(&contextual));
    println!("cosine ranking:     {:?}", rank(&cosine));
    Ok(())
}
