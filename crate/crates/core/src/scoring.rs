//! Late-interaction (MaxSim) relevance scoring and exact top-k retrieval.
//!
//! `s(q, p) = sum_j max_i <e_p^i, e_q^j>` with a plain dot product. All sums run
//! in `f32` in ascending index order so a score is reproducible bit for bit,
//! whatever the thread count.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::store::{Corpus, PageEmbeddings, QueryEmbeddings};

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn check_dims(q: &QueryEmbeddings, p: &PageEmbeddings) -> Result<()> {
    if q.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    Ok(())
}

/// Best dot product of one query token against any page vector.
#[inline]
fn token_max(token: &[f32], p: &PageEmbeddings) -> f32 {
    p.vectors
        .rows()
        .map(|row| dot(row, token))
        .fold(f32::NEG_INFINITY, f32::max)
}

/// Late-interaction score of a page for a query.
pub fn maxsim_score(q: &QueryEmbeddings, p: &PageEmbeddings) -> Result<f32> {
    check_dims(q, p)?;
    Ok(maxsim_unchecked(q, p))
}

fn maxsim_unchecked(q: &QueryEmbeddings, p: &PageEmbeddings) -> f32 {
    let mut total = 0.0f32;
    for token in q.vectors.rows() {
        total += token_max(token, p);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub page_id: String,
    pub score: f32,
}

/// Retrieval result for one query, best first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

impl RankedList {
    pub fn page_ids(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.page_id.as_str())
    }
}

/// Score descending, then page id ascending.
fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.page_id.cmp(&b.page_id))
}

/// Exhaustive top-k over the corpus. Ties are broken by ascending page id.
pub fn retrieve_topk(q: &QueryEmbeddings, corpus: &Corpus, k: usize) -> Result<RankedList> {
    if corpus.is_empty() {
        return Err(Error::validation("cannot retrieve from an empty corpus"));
    }
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if q.dim() != corpus.dim() {
        return Err(Error::DimensionMismatch {
            expected: corpus.dim(),
            actual: q.dim(),
        });
    }
    let mut hits: Vec<Hit> = corpus
        .pages()
        .par_iter()
        .map(|p| Hit {
            page_id: p.id.clone(),
            score: maxsim_unchecked(q, p),
        })
        .collect();
    let k = k.min(hits.len());
    if k < hits.len() {
        hits.select_nth_unstable_by(k - 1, hit_order);
        hits.truncate(k);
    }
    hits.sort_by(hit_order);
    Ok(RankedList {
        query_id: q.id.clone(),
        hits,
    })
}

/// Runs [`retrieve_topk`] for every query, keeping query order.
pub fn retrieve_all(
    queries: &[QueryEmbeddings],
    corpus: &Corpus,
    k: usize,
) -> Result<Vec<RankedList>> {
    queries
        .par_iter()
        .map(|q| retrieve_topk(q, corpus, k))
        .collect()
}

/// Per-patch maximum similarity to a query's tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsePotential {
    pub page_id: String,
    pub query_id: String,
    pub values: Vec<f32>,
}

/// `values[i] = max_j <e_p^i, e_q^j>`.
pub fn response_potential(p: &PageEmbeddings, q: &QueryEmbeddings) -> Result<ResponsePotential> {
    check_dims(q, p)?;
    let values = p
        .vectors
        .rows()
        .map(|patch| {
            q.vectors
                .rows()
                .map(|tok| dot(patch, tok))
                .fold(f32::NEG_INFINITY, f32::max)
        })
        .collect();
    Ok(ResponsePotential {
        page_id: p.id.clone(),
        query_id: q.id.clone(),
        values,
    })
}

/// Element-wise maximum of the response potentials over a query set.
pub fn aggregate_potential(p: &PageEmbeddings, queries: &[QueryEmbeddings]) -> Result<Vec<f32>> {
    let (first, rest) = queries
        .split_first()
        .ok_or_else(|| Error::validation(format!("page {:?}: empty query set", p.id)))?;
    let mut agg = response_potential(p, first)?.values;
    for q in rest {
        let r = response_potential(p, q)?;
        for (a, v) in agg.iter_mut().zip(r.values) {
            *a = a.max(v);
        }
    }
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{DType, Matrix};

    fn page(id: &str, rows: &[&[f32]]) -> PageEmbeddings {
        PageEmbeddings::new(id, Matrix::from_rows(rows).unwrap(), None).unwrap()
    }

    fn query(rows: &[&[f32]]) -> QueryEmbeddings {
        QueryEmbeddings::new("q", Matrix::from_rows(rows).unwrap())
    }

    #[test]
    fn identity_token_scores_one() {
        let u: &[f32] = &[0.6, 0.8, 0.0];
        let q = query(&[u]);
        assert_eq!(maxsim_score(&q, &page("p", &[u])).unwrap(), 1.0);
        let p = page("p", &[&[0.0, 0.0, 1.0], u, &[-0.6, -0.8, 0.0]]);
        assert!((maxsim_score(&q, &p).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_patch_sums_dot_products() {
        let e: &[f32] = &[1.0, 2.0];
        let q = query(&[&[0.5, 0.25], &[-1.0, 3.0]]);
        let got = maxsim_score(&q, &page("p", &[e])).unwrap();
        assert_eq!(got, dot(e, &[0.5, 0.25]) + dot(e, &[-1.0, 3.0]));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let q = query(&[&[1.0, 0.0]]);
        let p = page("p", &[&[1.0, 0.0, 0.0]]);
        assert!(matches!(maxsim_score(&q, &p), Err(Error::DimensionMismatch { .. })));
        assert!(response_potential(&p, &q).is_err());
    }

    #[test]
    fn exact_match_ranks_first_and_ties_use_page_id() {
        let u: &[f32] = &[1.0, 0.0];
        let corpus = Corpus::new(
            "c",
            vec![page("B", &[&[0.0, 1.0]]), page("A", &[u])],
            DType::F32,
        )
        .unwrap();
        let r = retrieve_topk(&query(&[u]), &corpus, 5).unwrap();
        assert_eq!(r.page_ids().collect::<Vec<_>>(), ["A", "B"]);

        let tie = Corpus::new("t", vec![page("z", &[u]), page("m", &[u])], DType::F32).unwrap();
        let r = retrieve_topk(&query(&[u]), &tie, 1).unwrap();
        assert_eq!(r.page_ids().collect::<Vec<_>>(), ["m"]);
    }

    #[test]
    fn empty_corpus_and_zero_k_are_errors() {
        let empty = Corpus::new("e", vec![], DType::F32).unwrap();
        assert!(retrieve_topk(&query(&[&[1.0]]), &empty, 3).is_err());
        let c = Corpus::new("c", vec![page("a", &[&[1.0]])], DType::F32).unwrap();
        assert!(retrieve_topk(&query(&[&[1.0]]), &c, 0).is_err());
    }

    #[test]
    fn zero_query_gives_zero_potential() {
        let p = page("p", &[&[0.3, 0.1], &[-2.0, 5.0]]);
        let r = response_potential(&p, &query(&[&[0.0, 0.0]])).unwrap();
        assert!(r.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aggregate_is_idempotent_and_needs_queries() {
        let p = page("p", &[&[1.0, 0.0], &[0.0, 1.0], &[0.7, 0.7]]);
        let q = query(&[&[0.2, 0.9]]);
        let single = aggregate_potential(&p, std::slice::from_ref(&q)).unwrap();
        assert_eq!(single, response_potential(&p, &q).unwrap().values);
        assert_eq!(aggregate_potential(&p, &[q.clone(), q]).unwrap(), single);
        assert!(aggregate_potential(&p, &[]).is_err());
    }
}
