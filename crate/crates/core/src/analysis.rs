//! Diagnostics on response potentials: how much two queries agree on which
//! patches matter, and how many patches sit near a page's maximum response.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scoring::response_potential;
use crate::store::{PageEmbeddings, QueryEmbeddings};

/// Number of bins of the `r_norm` histogram over `[0, 1]`.
pub const HISTOGRAM_BINS: usize = 20;

fn check_percent(top_percent: f64) -> Result<()> {
    if !(top_percent > 0.0 && top_percent <= 100.0) {
        return Err(Error::validation(format!(
            "top percent {top_percent} is outside (0, 100]"
        )));
    }
    Ok(())
}

/// `ceil(top_percent / 100 * n)`, never zero.
pub fn activated_count(n: usize, top_percent: f64) -> usize {
    // 1e-9 absorbs products like 0.07 * 100 that land a hair above an integer
    ((top_percent * n as f64 / 100.0 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Indices of the highest values, ties to the lower index; returned ascending.
pub fn top_indices(values: &[f32], top_percent: f64) -> Result<Vec<usize>> {
    check_percent(top_percent)?;
    let count = activated_count(values.len(), top_percent);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    Ok(order)
}

/// Patches of `p` activated by `q`: the top `top_percent`% by response potential.
pub fn activated_patches(
    p: &PageEmbeddings,
    q: &QueryEmbeddings,
    top_percent: f64,
) -> Result<Vec<usize>> {
    check_percent(top_percent)?;
    top_indices(&response_potential(p, q)?.values, top_percent)
}

/// `|A1 ∩ A2| / |A1|` for two sorted index sets of equal size.
fn overlap_sorted(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut shared) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared as f64 / a.len() as f64
}

/// Overlap of the top patches under two potential vectors of the same page.
pub fn potential_overlap(r1: &[f32], r2: &[f32], top_percent: f64) -> Result<f64> {
    if r1.len() != r2.len() {
        return Err(Error::validation("potential vectors differ in length"));
    }
    Ok(overlap_sorted(
        &top_indices(r1, top_percent)?,
        &top_indices(r2, top_percent)?,
    ))
}

pub fn pairwise_overlap(
    p: &PageEmbeddings,
    q1: &QueryEmbeddings,
    q2: &QueryEmbeddings,
    top_percent: f64,
) -> Result<f64> {
    check_percent(top_percent)?;
    let r1 = response_potential(p, q1)?.values;
    let r2 = response_potential(p, q2)?.values;
    potential_overlap(&r1, &r2, top_percent)
}

/// Min-max scaling to `[0, 1]`; a constant vector maps to all zeros.
pub fn normalize_values(values: &[f32]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::validation(
            "min-max normalization needs at least two patches",
        ));
    }
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    if hi == lo {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|&v| (v as f64 - lo) / (hi - lo)).collect())
}

pub fn normalized_potential(p: &PageEmbeddings, q: &QueryEmbeddings) -> Result<Vec<f64>> {
    normalize_values(&response_potential(p, q)?.values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapPoint {
    pub prune_ratio: f64,
    pub retention: f64,
    pub mean_overlap: f64,
    /// Expected overlap of two independent random selections, `1 - prune_ratio`.
    pub random_baseline: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapCurve {
    pub points: Vec<OverlapPoint>,
}

/// Mean activated-patch overlap over every unordered pair of queries of each
/// page, at each prune ratio (retention `1 - ratio`). Pages with fewer than two
/// queries contribute nothing.
pub fn overlap_curve(
    pages: &[(&PageEmbeddings, &[QueryEmbeddings])],
    ratios: &[f64],
) -> Result<OverlapCurve> {
    for &r in ratios {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::validation(format!(
                "prune ratio {r} is outside (0, 1)"
            )));
        }
    }
    let potentials: Vec<Vec<Vec<f32>>> = pages
        .par_iter()
        .map(|(p, qs)| {
            qs.iter()
                .map(|q| response_potential(p, q).map(|r| r.values))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut sorted: Vec<f64> = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut points = Vec::with_capacity(sorted.len());
    for ratio in sorted {
        let top_percent = (1.0 - ratio) * 100.0;
        let mut total = 0.0;
        let mut pairs = 0usize;
        for per_page in &potentials {
            let tops = per_page
                .iter()
                .map(|r| top_indices(r, top_percent))
                .collect::<Result<Vec<_>>>()?;
            for i in 0..tops.len() {
                for j in i + 1..tops.len() {
                    total += overlap_sorted(&tops[i], &tops[j]);
                    pairs += 1;
                }
            }
        }
        points.push(OverlapPoint {
            prune_ratio: ratio,
            retention: 1.0 - ratio,
            mean_overlap: if pairs > 0 { total / pairs as f64 } else { 0.0 },
            random_baseline: 1.0 - ratio,
            pairs,
        });
    }
    Ok(OverlapCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCount {
    pub threshold: f64,
    /// Mean number of patches with `r_norm > threshold` per (page, query) pair.
    pub mean_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RedundancyStats {
    pub pairs: usize,
    pub counts: Vec<ThresholdCount>,
    /// Counts of `r_norm` values in equal-width bins over `[0, 1]`; 1.0 lands in the last bin.
    pub histogram: Vec<u64>,
}

fn bin_of(v: f64) -> usize {
    ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

/// Redundancy statistics from already-normalized potential vectors.
pub fn redundancy_from_normalized(normalized: &[Vec<f64>], thresholds: &[f64]) -> RedundancyStats {
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    for v in normalized.iter().flatten() {
        histogram[bin_of(*v)] += 1;
    }
    let pairs = normalized.len();
    let counts = thresholds
        .iter()
        .map(|&t| {
            let above: usize = normalized
                .iter()
                .map(|r| r.iter().filter(|&&v| v > t).count())
                .sum();
            ThresholdCount {
                threshold: t,
                mean_count: if pairs > 0 {
                    above as f64 / pairs as f64
                } else {
                    0.0
                },
            }
        })
        .collect();
    RedundancyStats {
        pairs,
        counts,
        histogram,
    }
}

/// For each threshold, the mean count of patches whose normalized potential is
/// strictly above it, over all (page, query) pairs.
pub fn redundancy_stats(
    pairs: &[(&PageEmbeddings, &QueryEmbeddings)],
    thresholds: &[f64],
) -> Result<RedundancyStats> {
    if pairs.is_empty() {
        return Err(Error::validation("redundancy statistics need at least one pair"));
    }
    let normalized = pairs
        .par_iter()
        .map(|(p, q)| normalized_potential(p, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(redundancy_from_normalized(&normalized, thresholds))
}
