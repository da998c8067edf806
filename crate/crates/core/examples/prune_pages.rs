//! Random, score-oriented and attention-oriented pruning at one ratio.

use mvec::eval::evaluate;
use mvec::pruning::{prune_corpus, PruneSpec, PruneStrategy};
use mvec::store::relative_memory;
use mvec::synthetic::{generate, SyntheticSpec};

fn main() -> mvec::Result<()> {
    let data = generate(&SyntheticSpec::default())?;
    let base = evaluate(&data.corpus, &data.queries, &data.qrels, 5)?;
    println!("baseline NDCG@5 {:.4}", base.mean_ndcg);
    for strategy in [PruneStrategy::Random, PruneStrategy::Score, PruneStrategy::Attention] {
        let spec = PruneSpec { strategy, ratio: 0.8, seed: Some(1) };
        let pruned = prune_corpus(&data.corpus, &spec, Some(&data.aux))?;
        let r = evaluate(&pruned, &data.queries, &data.qrels, 5)?;
        println!(
            "{:?} @ 0.8: NDCG@5 {:.4}, memory {:.3}",
            strategy,
            r.mean_ndcg,
            relative_memory(&pruned, &data.corpus)?
        );
    }
    Ok(())
}
