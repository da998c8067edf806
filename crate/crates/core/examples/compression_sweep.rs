//! Random pruning against clustering at matched memory.

use mvec::eval::{run_sweep, CompressionSpec};
use mvec::store::Strategy;
use mvec::synthetic::{generate, SyntheticSpec};

fn main() -> mvec::Result<()> {
    let data = generate(&SyntheticSpec { pages: 60, ..Default::default() })?;
    let factors = [4.0, 9.0, 25.0, 49.0];
    let mut points: Vec<CompressionSpec> = factors
        .iter()
        .map(|f| CompressionSpec::from_parts(Strategy::Random, 1.0 - 1.0 / f, 0, true))
        .collect();
    points.extend(factors.iter().map(|&f| CompressionSpec::from_parts(Strategy::Cluster, f, 0, true)));
    let report = run_sweep(&data.corpus, &data.queries, &data.qrels, &points, 5, Some(&data.aux))?;
    println!("baseline NDCG@5 {:.4}", report.mean_ndcg);
    for p in &report.sweep {
        println!(
            "{:>8} {:>6.3}: NDCG@5 {:.4} ({:5.1}%), memory {:.4}",
            p.strategy.to_string(),
            p.parameter,
            p.mean_ndcg,
            100.0 * p.relative_performance,
            p.memory_ratio
        );
    }
    Ok(())
}
