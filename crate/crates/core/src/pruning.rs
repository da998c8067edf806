//! Token pruning: keep `N_p' = N_p - round(ratio * N_p)` of a page's vectors.
//!
//! Three selection rules share one kernel. Random pruning samples survivors
//! uniformly; score- and attention-oriented pruning drop the least important
//! patches first. Survivors always keep their original relative order and are
//! bit-identical to the input rows.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::aggregate_potential;
use crate::store::{AuxStore, Corpus, PageEmbeddings, Provenance, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneStrategy {
    Random,
    /// Rank by aggregated response potential over the page's synthesized queries.
    Score,
    /// Rank by received attention.
    Attention,
}

impl From<PruneStrategy> for Strategy {
    fn from(s: PruneStrategy) -> Self {
        match s {
            PruneStrategy::Random => Strategy::Random,
            PruneStrategy::Score => Strategy::Score,
            PruneStrategy::Attention => Strategy::Attention,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneSpec {
    pub strategy: PruneStrategy,
    /// Fraction of vectors removed, in `[0, 1)`.
    pub ratio: f64,
    pub seed: Option<u64>,
}

impl PruneSpec {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            strategy: self.strategy.into(),
            parameter: self.ratio,
            seed: match self.strategy {
                PruneStrategy::Random => Some(self.seed.unwrap_or(0)),
                _ => None,
            },
            renormalize: None,
        }
    }
}

/// Number of rows removed: `round(ratio * n)`, ties to even.
pub fn dropped_count(n: usize, ratio: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::validation(format!(
            "pruning ratio {ratio} is outside [0, 1)"
        )));
    }
    let drop = (ratio * n as f64).round_ties_even() as usize;
    if drop >= n {
        return Err(Error::validation(format!(
            "pruning ratio {ratio} leaves no vectors out of {n}"
        )));
    }
    Ok(drop)
}

fn keep_rows(p: &PageEmbeddings, survivors: &[usize]) -> Result<PageEmbeddings> {
    if survivors.len() == p.n_vectors() {
        return Ok(p.clone());
    }
    Ok(PageEmbeddings {
        id: p.id.clone(),
        vectors: p.vectors.select_rows(survivors)?,
        grid: None,
        normalized: p.normalized,
    })
}

/// Keeps a uniformly random subset of rows, drawn from a ChaCha8 stream seeded with `seed`.
pub fn prune_random(p: &PageEmbeddings, ratio: f64, seed: u64) -> Result<PageEmbeddings> {
    let n = p.n_vectors();
    let keep = n - dropped_count(n, ratio)?;
    if keep == n {
        return Ok(p.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut survivors = rand::seq::index::sample(&mut rng, n, keep).into_vec();
    survivors.sort_unstable();
    keep_rows(p, &survivors)
}

/// Drops the `round(ratio * N_p)` least important rows. Equal importances drop
/// the lower patch index first.
pub fn prune_by_scores(p: &PageEmbeddings, importance: &[f32], ratio: f64) -> Result<PageEmbeddings> {
    let n = p.n_vectors();
    if importance.len() != n {
        return Err(Error::validation(format!(
            "page {:?}: importance has length {}, page has {n} vectors",
            p.id,
            importance.len()
        )));
    }
    if importance.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation(format!(
            "page {:?}: importance contains a non-finite value",
            p.id
        )));
    }
    let drop = dropped_count(n, ratio)?;
    if drop == 0 {
        return Ok(p.clone());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| importance[a].total_cmp(&importance[b]).then(a.cmp(&b)));
    let mut survivors = order.split_off(drop);
    survivors.sort_unstable();
    keep_rows(p, &survivors)
}

/// SplitMix64 step; derives independent per-page seeds from one run seed.
pub(crate) fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Applies one pruning rule to a single page, pulling side data from `aux`.
pub fn prune_page(
    p: &PageEmbeddings,
    spec: &PruneSpec,
    page_index: usize,
    aux: Option<&AuxStore>,
) -> Result<PageEmbeddings> {
    match spec.strategy {
        PruneStrategy::Random => {
            let seed = mix_seed(spec.seed.unwrap_or(0), page_index as u64);
            prune_random(p, spec.ratio, seed)
        }
        PruneStrategy::Score => {
            let queries = aux
                .and_then(|a| a.get(&p.id))
                .map(|a| a.synth_queries.as_slice())
                .filter(|q| !q.is_empty())
                .ok_or_else(|| {
                    Error::validation(format!("page {:?} has no synthesized queries", p.id))
                })?;
            let importance = aggregate_potential(p, queries)?;
            prune_by_scores(p, &importance, spec.ratio)
        }
        PruneStrategy::Attention => {
            let attention = aux
                .and_then(|a| a.get(&p.id))
                .and_then(|a| a.attention.as_deref())
                .ok_or_else(|| {
                    Error::validation(format!("page {:?} has no attention vector", p.id))
                })?;
            prune_by_scores(p, attention, spec.ratio)
        }
    }
}

/// Prunes every page of a corpus (in parallel) and stamps provenance.
pub fn prune_corpus(corpus: &Corpus, spec: &PruneSpec, aux: Option<&AuxStore>) -> Result<Corpus> {
    let pages = corpus
        .pages()
        .par_iter()
        .enumerate()
        .map(|(i, p)| prune_page(p, spec, i, aux))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(corpus.manifest.corpus_id.clone(), pages, corpus.dtype())?
        .with_provenance(spec.provenance()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{Grid, Matrix};

    fn page(n: usize) -> PageEmbeddings {
        let data = (0..n * 2).map(|i| i as f32).collect();
        PageEmbeddings::new("p", Matrix::new(data, 2).unwrap(), None).unwrap()
    }

    fn first_column(p: &PageEmbeddings) -> Vec<f32> {
        p.vectors.rows().map(|r| r[0]).collect()
    }

    #[test]
    fn ratio_zero_is_identity() {
        let mut p = page(4);
        p.grid = Some(Grid::new(2, 2));
        assert_eq!(prune_random(&p, 0.0, 7).unwrap(), p);
        assert_eq!(prune_by_scores(&p, &[3.0, 1.0, 2.0, 0.0], 0.0).unwrap(), p);
    }

    #[test]
    fn random_is_deterministic_per_seed() {
        let p = page(10);
        let a = prune_random(&p, 0.5, 42).unwrap();
        assert_eq!(a.n_vectors(), 5);
        assert_eq!(a, prune_random(&p, 0.5, 42).unwrap());
        assert!(a.grid.is_none());
        let rows = first_column(&a);
        assert!(rows.windows(2).all(|w| w[0] < w[1]), "order preserved");
    }

    #[test]
    fn invalid_ratios() {
        let p = page(3);
        assert!(prune_random(&p, 1.0, 0).is_err());
        assert!(prune_random(&p, -0.1, 0).is_err());
        assert!(prune_by_scores(&p, &[0.0; 3], f64::NAN).is_err());
        // round(0.9 * 3) = 3 leaves nothing
        assert!(prune_random(&p, 0.9, 0).is_err());
    }

    #[test]
    fn rounding_is_half_to_even() {
        assert_eq!(dropped_count(10, 0.25).unwrap(), 2); // 2.5 -> 2
        assert_eq!(dropped_count(10, 0.35).unwrap(), 4); // 3.5 -> 4
        assert_eq!(dropped_count(4, 0.5).unwrap(), 2);
    }

    #[test]
    fn increasing_importance_drops_the_front() {
        let p = page(10);
        let imp: Vec<f32> = (0..10).map(|i| i as f32).collect();
        let out = prune_by_scores(&p, &imp, 0.3).unwrap();
        assert_eq!(first_column(&out), [6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0]);
    }

    #[test]
    fn equal_importance_drops_lower_indices() {
        let p = page(6);
        let out = prune_by_scores(&p, &[1.0; 6], 0.5).unwrap();
        assert_eq!(first_column(&out), [6.0, 8.0, 10.0]);
    }

    #[test]
    fn bad_importance() {
        let p = page(3);
        assert!(prune_by_scores(&p, &[1.0, 2.0], 0.3).is_err());
        assert!(prune_by_scores(&p, &[1.0, f32::NAN, 0.0], 0.3).is_err());
    }

    #[test]
    fn missing_aux_is_reported() {
        let p = page(4);
        let spec = PruneSpec {
            strategy: PruneStrategy::Attention,
            ratio: 0.5,
            seed: None,
        };
        assert!(prune_page(&p, &spec, 0, None).is_err());
    }
}
