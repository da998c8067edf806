//! 1D pooling, 2D pooling and clustering at the same merging factor.

use mvec::eval::evaluate;
use mvec::merging::{merge_corpus, MergeApproach, MergeSpec};
use mvec::synthetic::{generate, SyntheticSpec};

fn main() -> mvec::Result<()> {
    let data = generate(&SyntheticSpec::default())?;
    for factor in [4.0, 9.0, 25.0] {
        for approach in [MergeApproach::Pool1d, MergeApproach::Pool2d, MergeApproach::Cluster] {
            let merged = merge_corpus(&data.corpus, &MergeSpec::new(approach, factor))?;
            let r = evaluate(&merged, &data.queries, &data.qrels, 5)?;
            println!(
                "{approach:?} x{factor}: {} vectors/page, NDCG@5 {:.4}",
                merged.pages()[0].n_vectors(),
                r.mean_ndcg
            );
        }
    }
    Ok(())
}
