//! Seeded synthetic corpora with planted structure.
//!
//! Each page draws a few *topics* from a shared pool and lays them out as
//! vertical bands over the patch grid; every band patch is its topic vector
//! plus Gaussian noise. On top of that sit a handful of *detail* patches whose
//! vectors are unique to the page. A query for a page mixes tokens aimed at
//! its details and at its topics, so only the target page answers all tokens
//! well. Losing the rare detail patches is what hurts retrieval, which makes
//! the corpus a useful probe for compression strategies.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{AuxStore, Corpus, DType, Grid, Matrix, PageAux, PageEmbeddings, QueryEmbeddings, Qrels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub pages: usize,
    pub grid: Grid,
    pub dim: usize,
    /// Size of the shared topic pool.
    pub topic_pool: usize,
    pub topics_per_page: usize,
    pub details_per_page: usize,
    /// Norm of the noise added to each patch.
    pub noise: f32,
    /// Norm of the noise added to each query token.
    pub query_noise: f32,
    pub detail_tokens: usize,
    pub topic_tokens: usize,
    pub synth_per_page: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            pages: 40,
            grid: Grid::new(16, 24),
            dim: 32,
            topic_pool: 24,
            topics_per_page: 4,
            details_per_page: 6,
            noise: 0.35,
            query_noise: 0.15,
            detail_tokens: 2,
            topic_tokens: 2,
            synth_per_page: 3,
            seed: 0,
        }
    }
}

/// A generated corpus with its evaluation queries, judgments and side data.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub queries: Vec<QueryEmbeddings>,
    pub qrels: Qrels,
    pub aux: AuxStore,
}

fn unit(mut v: Vec<f32>) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, norm: f32) -> Vec<f32> {
    let scale = norm / (dim as f32).sqrt();
    (0..dim)
        .map(|_| rng.sample::<f32, _>(StandardNormal) * scale)
        .collect()
}

fn perturbed(rng: &mut ChaCha8Rng, base: &[f32], noise: f32) -> Vec<f32> {
    let n = gaussian(rng, base.len(), noise);
    unit(base.iter().zip(n).map(|(a, b)| a + b).collect())
}

struct PagePlan {
    topics: Vec<usize>,
    details: Vec<Vec<f32>>,
}

fn query_for(
    rng: &mut ChaCha8Rng,
    id: String,
    plan: &PagePlan,
    pool: &[Vec<f32>],
    spec: &SyntheticSpec,
) -> Result<QueryEmbeddings> {
    let mut rows = Vec::new();
    let nd = spec.detail_tokens.min(plan.details.len());
    for i in sample(rng, plan.details.len(), nd) {
        rows.push(perturbed(rng, &plan.details[i], spec.query_noise));
    }
    let nt = spec.topic_tokens.min(plan.topics.len());
    for i in sample(rng, plan.topics.len(), nt) {
        rows.push(perturbed(rng, &pool[plan.topics[i]], spec.query_noise));
    }
    if rows.is_empty() {
        return Err(Error::validation("synthetic queries need at least one token"));
    }
    Ok(QueryEmbeddings::new(id, Matrix::from_rows(&rows)?))
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    let n = spec.grid.cells();
    if spec.pages == 0 || n == 0 || spec.dim == 0 {
        return Err(Error::validation("synthetic corpus needs pages, patches and d >= 1"));
    }
    if spec.topics_per_page == 0 || spec.topics_per_page > spec.topic_pool {
        return Err(Error::validation("topics_per_page must be in 1..=topic_pool"));
    }
    if spec.details_per_page >= n {
        return Err(Error::validation("details_per_page must be below the patch count"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pool: Vec<Vec<f32>> = (0..spec.topic_pool)
        .map(|_| unit(gaussian(&mut rng, spec.dim, 1.0)))
        .collect();

    let mut pages = Vec::with_capacity(spec.pages);
    let mut plans = Vec::with_capacity(spec.pages);
    let mut aux = AuxStore::new();
    for pi in 0..spec.pages {
        let id = format!("page-{pi:05}");
        let topics = sample(&mut rng, spec.topic_pool, spec.topics_per_page).into_vec();
        let details: Vec<Vec<f32>> = (0..spec.details_per_page)
            .map(|_| unit(gaussian(&mut rng, spec.dim, 1.0)))
            .collect();
        let detail_at = sample(&mut rng, n, spec.details_per_page).into_vec();

        let mut rows = Vec::with_capacity(n);
        let mut attention = Vec::with_capacity(n);
        for cell in 0..n {
            let col = cell % spec.grid.cols;
            let band = col * spec.topics_per_page / spec.grid.cols;
            let row = match detail_at.iter().position(|&c| c == cell) {
                Some(k) => perturbed(&mut rng, &details[k], spec.noise * 0.25),
                None => perturbed(&mut rng, &pool[topics[band]], spec.noise),
            };
            rows.push(row);
            let weight = if band == 0 { 2.0 } else { 1.0 };
            attention.push(rng.random::<f32>() * weight);
        }
        let vectors = Matrix::from_rows(&rows)?;
        pages.push(PageEmbeddings::new(id.clone(), vectors, Some(spec.grid))?);
        let plan = PagePlan { topics, details };
        let synth_queries = (0..spec.synth_per_page)
            .map(|k| query_for(&mut rng, format!("{id}#{k}"), &plan, &pool, spec))
            .collect::<Result<Vec<_>>>()?;
        aux.insert(
            id.clone(),
            PageAux {
                page_id: id,
                attention: Some(attention),
                synth_queries,
            },
        );
        plans.push(plan);
    }

    let mut queries = Vec::with_capacity(spec.pages);
    let mut qrels = Qrels::new();
    for (pi, plan) in plans.iter().enumerate() {
        let qid = format!("query-{pi:05}");
        queries.push(query_for(&mut rng, qid.clone(), plan, &pool, spec)?);
        qrels.insert(qid, pages[pi].id.clone(), 1)?;
    }

    Ok(SyntheticData {
        corpus: Corpus::new(format!("synthetic-{}", spec.seed), pages, DType::F32)?,
        queries,
        qrels,
        aux,
    })
}

/// A page made of `groups` exact duplicate groups of unit vectors, each group
/// `group_size` rows long, laid out contiguously. Merging it into `groups`
/// clusters must reproduce the distinct vectors.
pub fn duplicate_group_page(
    id: impl Into<String>,
    groups: usize,
    group_size: usize,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<PageEmbeddings> {
    let mut rows = Vec::with_capacity(groups * group_size);
    for _ in 0..groups {
        let v: Vec<f32> = unit(
            (0..dim)
                .map(|_| rng.sample::<f32, _>(StandardNormal))
                .collect(),
        );
        for _ in 0..group_size {
            rows.push(v.clone());
        }
    }
    PageEmbeddings::new(id, Matrix::from_rows(&rows)?, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        let spec = SyntheticSpec {
            pages: 3,
            grid: Grid::new(4, 4),
            dim: 8,
            seed: 9,
            ..Default::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.queries, b.queries);
        assert_eq!(a.qrels, b.qrels);
        assert_eq!(a.corpus.len(), 3);
        assert!(a.corpus.pages().iter().all(|p| p.normalized && p.n_vectors() == 16));
        assert_eq!(a.aux.len(), 3);
        let c = generate(&SyntheticSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.corpus, c.corpus);
    }

    #[test]
    fn rejects_degenerate_specs() {
        let bad = SyntheticSpec {
            topics_per_page: 0,
            ..Default::default()
        };
        assert!(generate(&bad).is_err());
        let bad = SyntheticSpec {
            details_per_page: 16,
            grid: Grid::new(4, 4),
            ..Default::default()
        };
        assert!(generate(&bad).is_err());
    }
}
