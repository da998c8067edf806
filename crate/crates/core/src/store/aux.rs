//! Per-page side data: received-attention vectors and synthesized-query sets.
//!
//! Both travel as MVEC files. An attention file holds one single-row record per
//! page with `d = N_p`. A synthesized-query file holds records named
//! `page_id#k`, one per query.

use std::collections::BTreeMap;
use std::path::Path;

use super::{format, Corpus, DType, Matrix, PageEmbeddings, QueryEmbeddings};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PageAux {
    pub page_id: String,
    /// Attention mass received by each patch; non-negative, length `N_p`.
    pub attention: Option<Vec<f32>>,
    /// Sampled queries for the page, ordered by `k`.
    pub synth_queries: Vec<QueryEmbeddings>,
}

/// Aux records keyed by page id.
pub type AuxStore = BTreeMap<String, PageAux>;

fn check_attention(page: &PageEmbeddings, attention: &[f32]) -> Result<()> {
    if attention.len() != page.n_vectors() {
        return Err(Error::validation(format!(
            "attention for page {:?} has length {}, page has {} patches",
            page.id,
            attention.len(),
            page.n_vectors()
        )));
    }
    if let Some(v) = attention.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::validation(format!(
            "attention for page {:?} contains invalid value {v}",
            page.id
        )));
    }
    Ok(())
}

/// Reads an attention file into `store`, checking each vector against its page.
pub fn load_attention(path: impl AsRef<Path>, corpus: &Corpus, store: &mut AuxStore) -> Result<()> {
    let file = format::read_mvec(path.as_ref())?;
    for rec in file.records {
        let page = corpus.get(&rec.id).ok_or_else(|| {
            Error::validation(format!("attention record {:?} matches no page", rec.id))
        })?;
        if rec.n_vectors() != 1 {
            return Err(Error::validation(format!(
                "attention record {:?} must hold exactly one vector",
                rec.id
            )));
        }
        let attention = rec.vectors.into_vec();
        check_attention(page, &attention)?;
        let entry = store.entry(rec.id.clone()).or_insert_with(|| PageAux {
            page_id: rec.id.clone(),
            ..Default::default()
        });
        entry.attention = Some(attention);
    }
    Ok(())
}

/// Splits `page_id#k` into its parts.
fn split_synth_id(id: &str) -> Result<(&str, u64)> {
    id.rsplit_once('#')
        .and_then(|(p, k)| k.parse().ok().map(|k| (p, k)))
        .ok_or_else(|| Error::validation(format!("synthesized query id {id:?} is not page_id#k")))
}

pub fn load_synth_queries(
    path: impl AsRef<Path>,
    corpus: &Corpus,
    store: &mut AuxStore,
) -> Result<()> {
    let file = format::read_mvec(path.as_ref())?;
    if !corpus.is_empty() && file.dim != corpus.dim() && !file.records.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: corpus.dim(),
            actual: file.dim,
        });
    }
    let mut grouped: BTreeMap<String, BTreeMap<u64, QueryEmbeddings>> = BTreeMap::new();
    for rec in file.records {
        let (page_id, k) = split_synth_id(&rec.id)?;
        if corpus.get(page_id).is_none() {
            return Err(Error::validation(format!(
                "synthesized query {:?} matches no page",
                rec.id
            )));
        }
        let page_id = page_id.to_owned();
        if grouped
            .entry(page_id)
            .or_default()
            .insert(k, rec.into())
            .is_some()
        {
            return Err(Error::validation(format!("duplicate synthesized query index {k}")));
        }
    }
    for (page_id, queries) in grouped {
        let entry = store.entry(page_id.clone()).or_insert_with(|| PageAux {
            page_id,
            ..Default::default()
        });
        entry.synth_queries = queries.into_values().collect();
    }
    Ok(())
}

/// Writes the attention vectors of `store` (pages without one are skipped).
pub fn write_attention(store: &AuxStore, path: impl AsRef<Path>) -> Result<()> {
    let mut records = Vec::new();
    for aux in store.values() {
        if let Some(att) = &aux.attention {
            let m = Matrix::new(att.clone(), att.len())?;
            records.push(PageEmbeddings {
                id: aux.page_id.clone(),
                vectors: m,
                grid: None,
                normalized: false,
            });
        }
    }
    let bytes = format::encode(&records, DType::F32)?;
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes every synthesized query of `store` under `page_id#k` ids.
pub fn write_synth_queries(store: &AuxStore, dtype: DType, path: impl AsRef<Path>) -> Result<()> {
    let mut records = Vec::new();
    for aux in store.values() {
        for (k, q) in aux.synth_queries.iter().enumerate() {
            records.push(PageEmbeddings {
                id: format!("{}#{k}", aux.page_id),
                vectors: q.vectors.clone(),
                grid: None,
                normalized: q.normalized,
            });
        }
    }
    let bytes = format::encode(&records, dtype)?;
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_ids_split_on_last_hash() {
        assert_eq!(split_synth_id("doc#3#12").unwrap(), ("doc#3", 12));
        assert!(split_synth_id("doc").is_err());
        assert!(split_synth_id("doc#x").is_err());
    }

    #[test]
    fn attention_length_and_sign_are_checked() {
        let page =
            PageEmbeddings::new("p", Matrix::new(vec![1.0; 6], 2).unwrap(), None).unwrap();
        assert!(check_attention(&page, &[0.1, 0.2, 0.3]).is_ok());
        assert!(check_attention(&page, &[0.1, 0.2]).is_err());
        assert!(check_attention(&page, &[0.1, -0.2, 0.3]).is_err());
    }
}
