//! NDCG@k evaluation and compression sweeps.
//!
//! Gain is `2^rel - 1`, discount `1 / log2(rank + 1)`; unjudged pages have
//! `rel = 0`. Relative performance is `mean_candidate / mean_baseline` and the
//! memory ratio is `payload_candidate / payload_baseline`.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merging::{merge_corpus, MergeApproach, MergeSpec};
use crate::pruning::{prune_corpus, PruneSpec, PruneStrategy};
use crate::scoring::{retrieve_topk, RankedList};
use crate::store::{AuxStore, Corpus, Provenance, QueryEmbeddings, Qrels, Strategy};

fn gain(rel: u32) -> f64 {
    (rel as f64).exp2() - 1.0
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// NDCG@k of one ranking. Returns 0 when the query has no positive judgment.
pub fn ndcg_at_k(ranking: &RankedList, qrels: &Qrels, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    let judged = qrels.judgments(&ranking.query_id).ok_or_else(|| {
        Error::validation(format!("query {:?} has no relevance judgments", ranking.query_id))
    })?;
    let dcg: f64 = ranking
        .hits
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, h)| gain(judged.get(&h.page_id).copied().unwrap_or(0)) * discount(i + 1))
        .sum();
    let mut ideal: Vec<u32> = judged.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| gain(r) * discount(i + 1))
        .sum();
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg / idcg)
}

/// One compression setting of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CompressionSpec {
    Prune(PruneSpec),
    Merge(MergeSpec),
}

impl CompressionSpec {
    pub fn strategy(&self) -> Strategy {
        match self {
            CompressionSpec::Prune(p) => p.strategy.into(),
            CompressionSpec::Merge(m) => m.approach.into(),
        }
    }

    /// Pruning ratio or merging factor.
    pub fn parameter(&self) -> f64 {
        match self {
            CompressionSpec::Prune(p) => p.ratio,
            CompressionSpec::Merge(m) => m.factor,
        }
    }

    /// Builds a sweep point from a strategy and its parameter.
    pub fn from_parts(strategy: Strategy, parameter: f64, seed: u64, renormalize: bool) -> Self {
        let prune = |s| {
            CompressionSpec::Prune(PruneSpec {
                strategy: s,
                ratio: parameter,
                seed: Some(seed),
            })
        };
        let merge = |a| {
            CompressionSpec::Merge(MergeSpec {
                approach: a,
                factor: parameter,
                renormalize,
            })
        };
        match strategy {
            Strategy::Random => prune(PruneStrategy::Random),
            Strategy::Score => prune(PruneStrategy::Score),
            Strategy::Attention => prune(PruneStrategy::Attention),
            Strategy::Pool1d => merge(MergeApproach::Pool1d),
            Strategy::Pool2d => merge(MergeApproach::Pool2d),
            Strategy::Cluster => merge(MergeApproach::Cluster),
        }
    }

    pub fn apply(&self, corpus: &Corpus, aux: Option<&AuxStore>) -> Result<Corpus> {
        match self {
            CompressionSpec::Prune(p) => prune_corpus(corpus, p, aux),
            CompressionSpec::Merge(m) => merge_corpus(corpus, m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub strategy: Strategy,
    pub parameter: f64,
    pub mean_ndcg: f64,
    pub relative_performance: f64,
    pub memory_bytes: u64,
    pub memory_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub corpus_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub k: usize,
    pub per_query: BTreeMap<String, f64>,
    pub mean_ndcg: f64,
    /// Name of the run this report is compared against, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    pub relative_performance: f64,
    pub memory_bytes: u64,
    pub memory_ratio: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepPoint>,
}

impl EvalReport {
    /// Re-expresses relative performance and memory against `baseline`.
    pub fn compare_to(&mut self, baseline: &EvalReport) -> Result<()> {
        if baseline.mean_ndcg <= 0.0 || baseline.memory_bytes == 0 {
            return Err(Error::validation(
                "baseline report has zero NDCG or zero memory",
            ));
        }
        self.baseline = Some(baseline.corpus_id.clone());
        self.relative_performance = self.mean_ndcg / baseline.mean_ndcg;
        self.memory_ratio = self.memory_bytes as f64 / baseline.memory_bytes as f64;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn check_judged(queries: &[QueryEmbeddings], qrels: &Qrels) -> Result<()> {
    for q in queries {
        let judged = qrels.judgments(&q.id).ok_or_else(|| {
            Error::validation(format!("query {:?} has no relevance judgments", q.id))
        })?;
        if !judged.values().any(|&r| r > 0) {
            return Err(Error::validation(format!(
                "query {:?} has no positive judgment",
                q.id
            )));
        }
    }
    Ok(())
}

/// Per-query NDCG@k in query-id order.
pub fn evaluate_rankings(
    rankings: &[RankedList],
    qrels: &Qrels,
    k: usize,
) -> Result<BTreeMap<String, f64>> {
    rankings
        .iter()
        .map(|r| Ok((r.query_id.clone(), ndcg_at_k(r, qrels, k)?)))
        .collect()
}

fn mean(values: &BTreeMap<String, f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.values().sum::<f64>() / values.len() as f64
}

/// Retrieves top-k for every query and scores the rankings.
pub fn evaluate(
    corpus: &Corpus,
    queries: &[QueryEmbeddings],
    qrels: &Qrels,
    k: usize,
) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::validation("no queries to evaluate"));
    }
    check_judged(queries, qrels)?;
    let rankings = queries
        .par_iter()
        .map(|q| retrieve_topk(q, corpus, k))
        .collect::<Result<Vec<_>>>()?;
    let per_query = evaluate_rankings(&rankings, qrels, k)?;
    Ok(EvalReport {
        corpus_id: corpus.manifest.corpus_id.clone(),
        provenance: corpus.manifest.provenance.clone(),
        k,
        mean_ndcg: mean(&per_query),
        per_query,
        baseline: None,
        relative_performance: 1.0,
        memory_bytes: corpus.footprint(),
        memory_ratio: 1.0,
        sweep: Vec::new(),
    })
}

/// Evaluates the uncompressed corpus, then every compression point against it.
/// The returned report describes the baseline and lists one sweep row per point.
pub fn run_sweep(
    corpus: &Corpus,
    queries: &[QueryEmbeddings],
    qrels: &Qrels,
    points: &[CompressionSpec],
    k: usize,
    aux: Option<&AuxStore>,
) -> Result<EvalReport> {
    let mut report = evaluate(corpus, queries, qrels, k)?;
    let base_mean = report.mean_ndcg;
    let base_bytes = report.memory_bytes;
    for spec in points {
        let compressed = spec.apply(corpus, aux)?;
        let r = evaluate(&compressed, queries, qrels, k)?;
        report.sweep.push(SweepPoint {
            strategy: spec.strategy(),
            parameter: spec.parameter(),
            mean_ndcg: r.mean_ndcg,
            relative_performance: if base_mean > 0.0 {
                r.mean_ndcg / base_mean
            } else {
                0.0
            },
            memory_bytes: r.memory_bytes,
            memory_ratio: if base_bytes > 0 {
                r.memory_bytes as f64 / base_bytes as f64
            } else {
                0.0
            },
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::Hit;

    fn ranking(ids: &[&str]) -> RankedList {
        RankedList {
            query_id: "q".into(),
            hits: ids
                .iter()
                .enumerate()
                .map(|(i, id)| Hit {
                    page_id: id.to_string(),
                    score: -(i as f32),
                })
                .collect(),
        }
    }

    fn qrels(entries: &[(&str, u32)]) -> Qrels {
        let mut q = Qrels::new();
        for (p, r) in entries {
            q.insert("q", *p, *r).unwrap();
        }
        q
    }

    #[test]
    fn relevant_first_is_perfect() {
        let q = qrels(&[("a", 1)]);
        assert_eq!(ndcg_at_k(&ranking(&["a", "b"]), &q, 5).unwrap(), 1.0);
    }

    #[test]
    fn relevant_second() {
        let q = qrels(&[("a", 1)]);
        let v = ndcg_at_k(&ranking(&["b", "a"]), &q, 5).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn cut_off_and_unknown_query() {
        let q = qrels(&[("a", 1)]);
        assert_eq!(ndcg_at_k(&ranking(&["b", "c", "a"]), &q, 2).unwrap(), 0.0);
        let mut other = ranking(&["a"]);
        other.query_id = "zzz".into();
        assert!(ndcg_at_k(&other, &q, 5).is_err());
        assert!(ndcg_at_k(&ranking(&["a"]), &q, 0).is_err());
    }

    #[test]
    fn all_zero_judgments_give_zero() {
        let q = qrels(&[("a", 0)]);
        assert_eq!(ndcg_at_k(&ranking(&["a"]), &q, 5).unwrap(), 0.0);
    }
}
