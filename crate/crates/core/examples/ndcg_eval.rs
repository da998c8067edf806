//! NDCG@k of hand-built rankings.

use mvec::scoring::{Hit, RankedList};
use mvec::{ndcg_at_k, Qrels};

fn ranking(ids: &[&str]) -> RankedList {
    RankedList {
        query_id: "q".into(),
        hits: ids
            .iter()
            .enumerate()
            .map(|(i, id)| Hit { page_id: id.to_string(), score: -(i as f32) })
            .collect(),
    }
}

fn main() -> mvec::Result<()> {
    let mut qrels = Qrels::new();
    qrels.insert("q", "x", 3)?;
    qrels.insert("q", "y", 2)?;
    for order in [["x", "y", "z"], ["y", "x", "z"], ["z", "y", "x"]] {
        println!("{order:?}: NDCG@5 {:.4}", ndcg_at_k(&ranking(&order), &qrels, 5)?);
    }
    Ok(())
}
