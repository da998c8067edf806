//! Token merging applied to stored (post-projector) page embeddings.
//!
//! Every approach partitions a page's vectors into groups and replaces each
//! group by its mean, optionally rescaled to unit length:
//!
//! - [`merge_pool_1d`]: contiguous runs of the flattened patch sequence.
//! - [`merge_pool_2d`]: rectangular windows over the patch grid.
//! - [`merge_cluster`]: average-linkage agglomerative clusters under cosine distance.

mod cluster;
mod pool;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{l2_norm, Corpus, Matrix, PageEmbeddings, Provenance, Strategy, NORM_TOLERANCE_F32};

pub use cluster::{
    agglomerate, agglomerate_naive, cosine_distance_matrix, hierarchical_cluster, merge_cluster,
    ClusterAssignment,
};
pub use pool::{merge_pool_1d, merge_pool_2d, pool2d_window};

/// Representatives with a norm below this cannot be renormalized.
pub const MIN_RENORM: f32 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeApproach {
    Pool1d,
    Pool2d,
    Cluster,
}

impl From<MergeApproach> for Strategy {
    fn from(a: MergeApproach) -> Self {
        match a {
            MergeApproach::Pool1d => Strategy::Pool1d,
            MergeApproach::Pool2d => Strategy::Pool2d,
            MergeApproach::Cluster => Strategy::Cluster,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeSpec {
    pub approach: MergeApproach,
    /// Target `N_p / N_p'`, at least 1.
    pub factor: f64,
    pub renormalize: bool,
}

impl MergeSpec {
    pub fn new(approach: MergeApproach, factor: f64) -> Self {
        MergeSpec {
            approach,
            factor,
            renormalize: true,
        }
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            strategy: self.approach.into(),
            parameter: self.factor,
            seed: None,
            renormalize: Some(self.renormalize),
        }
    }
}

fn check_factor(factor: f64) -> Result<()> {
    if !(factor.is_finite() && factor >= 1.0) {
        return Err(Error::validation(format!(
            "merging factor {factor} must be a finite number >= 1"
        )));
    }
    Ok(())
}

/// `max(1, round(n / factor))`, ties to even.
pub fn merged_count(n: usize, factor: f64) -> Result<usize> {
    check_factor(factor)?;
    Ok(((n as f64 / factor).round_ties_even() as usize).clamp(1, n.max(1)))
}

/// Mean of the listed rows, accumulated in `f64` in index order.
pub(crate) fn mean_of(m: &Matrix, members: &[usize], out: &mut Vec<f32>) {
    let d = m.dim();
    let mut acc = vec![0.0f64; d];
    for &i in members {
        for (a, &v) in acc.iter_mut().zip(m.row(i)) {
            *a += v as f64;
        }
    }
    let n = members.len() as f64;
    out.extend(acc.into_iter().map(|a| (a / n) as f32));
}

/// Builds the merged page from groups of row indices, in group order.
pub(crate) fn merge_groups(
    p: &PageEmbeddings,
    groups: &[Vec<usize>],
    grid: Option<crate::store::Grid>,
    renormalize: bool,
) -> Result<PageEmbeddings> {
    let d = p.dim();
    let mut data = Vec::with_capacity(groups.len() * d);
    for g in groups {
        let start = data.len();
        mean_of(&p.vectors, g, &mut data);
        if renormalize {
            let row = &mut data[start..];
            let norm = l2_norm(row);
            if norm < MIN_RENORM {
                return Err(Error::validation(format!(
                    "page {:?}: merged vector has norm {norm}, cannot renormalize",
                    p.id
                )));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let vectors = Matrix::new(data, d)?;
    // singleton groups without rescaling reproduce the rows exactly
    let normalized = if !renormalize && groups.len() == p.n_vectors() {
        p.normalized
    } else {
        vectors.rows_unit_norm(NORM_TOLERANCE_F32)
    };
    Ok(PageEmbeddings {
        id: p.id.clone(),
        vectors,
        grid,
        normalized,
    })
}

pub fn merge_page(p: &PageEmbeddings, spec: &MergeSpec) -> Result<PageEmbeddings> {
    match spec.approach {
        MergeApproach::Pool1d => merge_pool_1d(p, spec.factor, spec.renormalize),
        MergeApproach::Pool2d => merge_pool_2d(p, spec.factor, spec.renormalize),
        MergeApproach::Cluster => merge_cluster(p, spec.factor, spec.renormalize),
    }
}

/// Merges every page of a corpus (in parallel) and stamps provenance.
pub fn merge_corpus(corpus: &Corpus, spec: &MergeSpec) -> Result<Corpus> {
    check_factor(spec.factor)?;
    let pages = corpus
        .pages()
        .par_iter()
        .map(|p| merge_page(p, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(corpus.manifest.corpus_id.clone(), pages, corpus.dtype())?
        .with_provenance(spec.provenance()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_count_rounding() {
        assert_eq!(merged_count(768, 9.0).unwrap(), 85);
        assert_eq!(merged_count(768, 49.0).unwrap(), 16);
        assert_eq!(merged_count(7, 2.0).unwrap(), 4); // 3.5 -> 4
        assert_eq!(merged_count(5, 2.0).unwrap(), 2); // 2.5 -> 2
        assert_eq!(merged_count(3, 100.0).unwrap(), 1);
        assert!(merged_count(3, 0.5).is_err());
        assert!(merged_count(3, f64::NAN).is_err());
    }

    #[test]
    fn zero_mean_cannot_be_renormalized() {
        let p = PageEmbeddings::new(
            "p",
            Matrix::from_rows(&[[1.0f32, 0.0], [-1.0, 0.0]]).unwrap(),
            None,
        )
        .unwrap();
        assert!(merge_groups(&p, &[vec![0, 1]], None, true).is_err());
        let m = merge_groups(&p, &[vec![0, 1]], None, false).unwrap();
        assert_eq!(m.vectors.row(0), [0.0, 0.0]);
    }
}
