//! Exhaustive MaxSim retrieval over a synthetic corpus.

use mvec::scoring::retrieve_topk;
use mvec::synthetic::{generate, SyntheticSpec};

fn main() -> mvec::Result<()> {
    let data = generate(&SyntheticSpec::default())?;
    for q in data.queries.iter().take(3) {
        let ranked = retrieve_topk(q, &data.corpus, 3)?;
        println!("{}:", q.id);
        for (rank, hit) in ranked.hits.iter().enumerate() {
            println!("  {}. {} {:.4}", rank + 1, hit.page_id, hit.score);
        }
    }
    Ok(())
}
