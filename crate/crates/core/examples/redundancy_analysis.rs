//! Activated-patch overlap and near-maximum patch counts from synthesized queries.

use mvec::analysis::{overlap_curve, redundancy_stats};
use mvec::synthetic::{generate, SyntheticSpec};

fn main() -> mvec::Result<()> {
    let data = generate(&SyntheticSpec::default())?;
    let pages: Vec<_> = data
        .corpus
        .pages()
        .iter()
        .map(|p| (p, data.aux[&p.id].synth_queries.as_slice()))
        .collect();
    let curve = overlap_curve(&pages, &[0.1, 0.5, 0.9])?;
    for p in &curve.points {
        println!(
            "prune ratio {:.1}: overlap {:.3} (random {:.3})",
            p.prune_ratio, p.mean_overlap, p.random_baseline
        );
    }
    let pairs: Vec<_> = pages
        .iter()
        .flat_map(|(p, qs)| qs.iter().map(move |q| (*p, q)))
        .collect();
    let stats = redundancy_stats(&pairs, &[0.9, 0.95])?;
    for c in &stats.counts {
        println!("r_norm > {}: {:.1} patches per pair", c.threshold, c.mean_count);
    }
    Ok(())
}
