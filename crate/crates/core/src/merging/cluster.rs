//! Average-linkage (UPGMA) agglomerative clustering under cosine distance.
//!
//! A cluster is identified by its smallest member index. At every step the
//! pair with the smallest linkage distance merges; equal distances are resolved
//! by the lexicographically smallest `(min_member_a, min_member_b)` pair, which
//! makes the merge order a total order and the result independent of how the
//! search is carried out.

use std::cmp::Ordering;

use super::{merge_groups, merged_count};
use crate::error::{Error, Result};
use crate::store::PageEmbeddings;

/// Flat clustering of a page's vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    /// Cluster label of each input row. Labels are numbered in order of each
    /// cluster's smallest member.
    pub labels: Vec<usize>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    /// Member rows of each cluster, in label order.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }
}

/// Full `n x n` matrix of `1 - cos(a, b)`, computed in `f64`.
pub fn cosine_distance_matrix(p: &PageEmbeddings) -> Result<Vec<f64>> {
    let n = p.n_vectors();
    let rows: Vec<Vec<f64>> = p
        .vectors
        .rows()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    let mut norms = Vec::with_capacity(n);
    for (i, r) in rows.iter().enumerate() {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::validation(format!(
                "page {:?}: row {i} has zero norm, cosine distance is undefined",
                p.id
            )));
        }
        norms.push(norm);
    }
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            let d = 1.0 - dot / (norms[i] * norms[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    Ok(dist)
}

#[inline]
fn pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Orders candidate merges: distance, then the `(lo, hi)` slot pair.
#[inline]
fn candidate_cmp(d1: f64, p1: (usize, usize), d2: f64, p2: (usize, usize)) -> Ordering {
    d1.total_cmp(&d2).then(p1.cmp(&p2))
}

struct State {
    n: usize,
    dist: Vec<f64>,
    size: Vec<usize>,
    active: Vec<bool>,
    owner: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl State {
    fn new(dist: Vec<f64>, n: usize) -> Self {
        State {
            n,
            dist,
            size: vec![1; n],
            active: vec![true; n],
            owner: (0..n).collect(),
            members: (0..n).map(|i| vec![i]).collect(),
        }
    }

    #[inline]
    fn d(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.n + b]
    }

    /// Merges slot `b` into slot `a` (`a < b`) with the average-linkage update.
    fn merge(&mut self, a: usize, b: usize) {
        debug_assert!(a < b);
        let (na, nb) = (self.size[a] as f64, self.size[b] as f64);
        for k in 0..self.n {
            if !self.active[k] || k == a || k == b {
                continue;
            }
            let d = (na * self.d(k, a) + nb * self.d(k, b)) / (na + nb);
            self.dist[k * self.n + a] = d;
            self.dist[a * self.n + k] = d;
        }
        self.active[b] = false;
        self.size[a] += self.size[b];
        let moved = std::mem::take(&mut self.members[b]);
        for &m in &moved {
            self.owner[m] = a;
        }
        self.members[a].extend(moved);
    }

    fn assignment(&self) -> ClusterAssignment {
        let mut label_of_slot = vec![usize::MAX; self.n];
        let mut next = 0;
        let labels = (0..self.n)
            .map(|i| {
                let slot = self.owner[i];
                if label_of_slot[slot] == usize::MAX {
                    label_of_slot[slot] = next;
                    next += 1;
                }
                label_of_slot[slot]
            })
            .collect();
        ClusterAssignment {
            labels,
            n_clusters: next,
        }
    }

    /// Best partner of `i` among active slots.
    fn nearest(&self, i: usize) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..self.n {
            if j == i || !self.active[j] {
                continue;
            }
            let d = self.d(i, j);
            let better = match best {
                None => true,
                Some((bd, bj)) => candidate_cmp(d, pair(i, j), bd, pair(i, bj)) == Ordering::Less,
            };
            if better {
                best = Some((d, j));
            }
        }
        best
    }
}

fn check_args(dist: &[f64], n: usize, n_clusters: usize) -> Result<()> {
    if dist.len() != n * n {
        return Err(Error::validation(format!(
            "distance matrix has {} entries, expected {}",
            dist.len(),
            n * n
        )));
    }
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::validation(format!(
            "cannot form {n_clusters} clusters from {n} vectors"
        )));
    }
    Ok(())
}

#[allow(clippy::needless_range_loop)]
/// Agglomerates until `n_clusters` remain, caching each cluster's nearest
/// neighbour. Produces exactly the merges of [`agglomerate_naive`].
pub fn agglomerate(dist: Vec<f64>, n: usize, n_clusters: usize) -> Result<ClusterAssignment> {
    check_args(&dist, n, n_clusters)?;
    let mut st = State::new(dist, n);
    let mut nn: Vec<Option<(f64, usize)>> = (0..n).map(|i| st.nearest(i)).collect();
    let mut remaining = n;
    while remaining > n_clusters {
        let mut best: Option<(f64, (usize, usize))> = None;
        for i in 0..n {
            if !st.active[i] {
                continue;
            }
            if let Some((d, j)) = nn[i] {
                let pr = pair(i, j);
                let better = match best {
                    None => true,
                    Some((bd, bp)) => candidate_cmp(d, pr, bd, bp) == Ordering::Less,
                };
                if better {
                    best = Some((d, pr));
                }
            }
        }
        let (_, (a, b)) = best.expect("at least two active clusters");
        st.merge(a, b);
        remaining -= 1;
        nn[b] = None;
        for k in 0..n {
            if !st.active[k] || k == a {
                continue;
            }
            match nn[k] {
                Some((_, j)) if j == a || j == b => nn[k] = st.nearest(k),
                Some((bd, j)) => {
                    let d = st.d(k, a);
                    if candidate_cmp(d, pair(k, a), bd, pair(k, j)) == Ordering::Less {
                        nn[k] = Some((d, a));
                    }
                }
                None => nn[k] = st.nearest(k),
            }
        }
        nn[a] = st.nearest(a);
    }
    Ok(st.assignment())
}

/// Reference agglomeration that rescans every active pair at each step.
/// `O(n^3)`; used to cross-check [`agglomerate`].
pub fn agglomerate_naive(dist: Vec<f64>, n: usize, n_clusters: usize) -> Result<ClusterAssignment> {
    check_args(&dist, n, n_clusters)?;
    let mut st = State::new(dist, n);
    let mut remaining = n;
    while remaining > n_clusters {
        let mut best: Option<(f64, (usize, usize))> = None;
        for i in 0..n {
            if !st.active[i] {
                continue;
            }
            for j in i + 1..n {
                if !st.active[j] {
                    continue;
                }
                let d = st.d(i, j);
                let better = match best {
                    None => true,
                    Some((bd, bp)) => candidate_cmp(d, (i, j), bd, bp) == Ordering::Less,
                };
                if better {
                    best = Some((d, (i, j)));
                }
            }
        }
        let (_, (a, b)) = best.expect("at least two active clusters");
        st.merge(a, b);
        remaining -= 1;
    }
    Ok(st.assignment())
}

/// Clusters a page's vectors into `n_clusters` groups.
pub fn hierarchical_cluster(p: &PageEmbeddings, n_clusters: usize) -> Result<ClusterAssignment> {
    let n = p.n_vectors();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::validation(format!(
            "page {:?}: cannot form {n_clusters} clusters from {n} vectors",
            p.id
        )));
    }
    let dist = cosine_distance_matrix(p)?;
    agglomerate(dist, n, n_clusters)
}

/// Replaces each cluster by its member mean, `round(N_p / factor)` clusters per
/// page. Output rows follow label order; grid metadata is dropped.
pub fn merge_cluster(p: &PageEmbeddings, factor: f64, renormalize: bool) -> Result<PageEmbeddings> {
    let m = merged_count(p.n_vectors(), factor)?;
    let assignment = hierarchical_cluster(p, m)?;
    let grid = if m == p.n_vectors() { p.grid } else { None };
    merge_groups(p, &assignment.groups(), grid, renormalize)
}
