use std::collections::HashMap;

use proptest::prelude::*;

use mvec::analysis::{normalize_values, top_indices};
use mvec::merging::{
    agglomerate, agglomerate_naive, cosine_distance_matrix, merge_cluster, merge_pool_1d, merge_pool_2d,
    merged_count, pool2d_window,
};
use mvec::pruning::{dropped_count, prune_by_scores, prune_random};
use mvec::scoring::{maxsim_score, Hit};
use mvec::store::format::{decode, encode};
use mvec::{ndcg_at_k, Corpus, DType, Grid, Matrix, PageEmbeddings, QueryEmbeddings, Qrels, RankedList};

fn rows_strategy(max_rows: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    prop::collection::vec(prop::collection::vec(-1.0f32..1.0, dim), 1..=max_rows)
}

fn page_of(rows: &[Vec<f32>]) -> PageEmbeddings {
    PageEmbeddings::new("p", Matrix::from_rows(rows).unwrap(), None).unwrap()
}

fn query_of(rows: &[Vec<f32>]) -> QueryEmbeddings {
    QueryEmbeddings::new("q", Matrix::from_rows(rows).unwrap())
}

fn unit(rows: Vec<Vec<f32>>) -> Vec<Vec<f32>> {
    rows.into_iter()
        .map(|mut r| {
            let n = r.iter().map(|x| x * x).sum::<f32>().sqrt();
            if n < 1e-3 {
                r[0] = 1.0;
                let n = r.iter().map(|x| x * x).sum::<f32>().sqrt();
                r.iter_mut().for_each(|x| *x /= n);
            } else {
                r.iter_mut().for_each(|x| *x /= n);
            }
            r
        })
        .collect()
}

fn is_subsequence(sub: &PageEmbeddings, full: &PageEmbeddings) -> bool {
    let mut it = full.vectors.rows();
    sub.vectors.rows().all(|r| {
        it.by_ref()
            .any(|f| f.iter().zip(r).all(|(a, b)| a.to_bits() == b.to_bits()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn maxsim_ignores_page_row_order(rows in rows_strategy(20, 6), q in rows_strategy(5, 6), seed in any::<u64>()) {
        let p = page_of(&rows);
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        let n = perm.len();
        for i in (1..n).rev() {
            perm.swap(i, (seed as usize).wrapping_mul(i + 7) % (i + 1));
        }
        let shuffled = PageEmbeddings::new("p", p.vectors.select_rows(&perm).unwrap(), None).unwrap();
        let q = query_of(&q);
        prop_assert_eq!(maxsim_score(&q, &p).unwrap().to_bits(), maxsim_score(&q, &shuffled).unwrap().to_bits());
    }

    #[test]
    fn maxsim_is_additive_over_query_tokens(rows in rows_strategy(20, 6), q1 in rows_strategy(5, 6), q2 in rows_strategy(5, 6)) {
        let p = page_of(&rows);
        let joined: Vec<Vec<f32>> = q1.iter().chain(&q2).cloned().collect();
        let whole = maxsim_score(&query_of(&joined), &p).unwrap();
        let parts = maxsim_score(&query_of(&q1), &p).unwrap() + maxsim_score(&query_of(&q2), &p).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-5 * (1.0 + parts.abs()));
    }

    #[test]
    fn ranking_is_invariant_to_positive_query_scaling(
        pages in prop::collection::vec(rows_strategy(8, 4), 2..8),
        q in rows_strategy(4, 4),
        exp in -3i32..4,
    ) {
        let pages: Vec<PageEmbeddings> = pages.iter().enumerate().map(|(i, r)| {
            PageEmbeddings::new(format!("p{i}"), Matrix::from_rows(r).unwrap(), None).unwrap()
        }).collect();
        let corpus = Corpus::new("c", pages, DType::F32).unwrap();
        let scale = 2f32.powi(exp);
        let scaled: Vec<Vec<f32>> = q.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
        let a = mvec::retrieve_topk(&query_of(&q), &corpus, 10).unwrap();
        let b = mvec::retrieve_topk(&query_of(&scaled), &corpus, 10).unwrap();
        prop_assert_eq!(a.page_ids().collect::<Vec<_>>(), b.page_ids().collect::<Vec<_>>());
    }

    #[test]
    fn random_pruning_keeps_an_ordered_subset(rows in rows_strategy(40, 3), ratio in 0.0f64..0.99, seed in any::<u64>()) {
        let p = page_of(&rows);
        let n = rows.len();
        let survivors = n as i64 - (ratio * n as f64).round_ties_even() as i64;
        if survivors < 1 {
            prop_assert!(prune_random(&p, ratio, seed).is_err());
            prop_assert!(prune_by_scores(&p, &vec![0.0; n], ratio).is_err());
            return Ok(());
        }
        let out = prune_random(&p, ratio, seed).unwrap();
        let dropped = dropped_count(n, ratio).unwrap();
        prop_assert_eq!(out.n_vectors(), n - dropped);
        prop_assert!(out.n_vectors() >= 1);
        prop_assert!(is_subsequence(&out, &p));
        prop_assert_eq!(prune_random(&p, ratio, seed).unwrap(), out);
    }

    #[test]
    fn importance_pruning_depends_only_on_rank_order(
        rows in rows_strategy(30, 3),
        scores in prop::collection::vec(0i32..20, 30),
        ratio in 0.0f64..0.99,
    ) {
        let p = page_of(&rows);
        let n = rows.len();
        prop_assume!(dropped_count(n, ratio).is_ok());
        let imp: Vec<f32> = scores[..n].iter().map(|&s| s as f32).collect();
        let transformed: Vec<f32> = imp.iter().map(|x| 3.0 * x + 7.0).collect();
        let a = prune_by_scores(&p, &imp, ratio).unwrap();
        prop_assert_eq!(&a, &prune_by_scores(&p, &transformed, ratio).unwrap());
        prop_assert!(is_subsequence(&a, &p));
        // every survivor is at least as important as every dropped row
        let kept_min = a.vectors.rows().map(|r| {
            let i = p.vectors.rows().position(|f| f == r).unwrap();
            imp[i]
        }).fold(f32::INFINITY, f32::min);
        let kept: usize = a.n_vectors();
        let above = imp.iter().filter(|&&v| v > kept_min).count();
        prop_assert!(above <= kept);
    }

    #[test]
    fn pruning_never_raises_a_score(rows in rows_strategy(30, 4), q in rows_strategy(4, 4), ratio in 0.0f64..0.99, seed in any::<u64>()) {
        let p = page_of(&rows);
        prop_assume!(dropped_count(rows.len(), ratio).is_ok());
        let q = query_of(&q);
        let pruned = prune_random(&p, ratio, seed).unwrap();
        prop_assert!(maxsim_score(&q, &pruned).unwrap() <= maxsim_score(&q, &p).unwrap());
    }

    #[test]
    fn merge_counts_follow_the_factor(rows in rows_strategy(40, 3), factor in 1.0f64..50.0) {
        let rows = unit(rows);
        let p = page_of(&rows);
        let m = merged_count(rows.len(), factor).unwrap();
        let expected = ((rows.len() as f64 / factor).round_ties_even() as usize).max(1);
        prop_assert_eq!(m, expected);
        let pooled = merge_pool_1d(&p, factor, true).unwrap();
        prop_assert_eq!(pooled.n_vectors(), m);
        let clustered = merge_cluster(&p, factor, true).unwrap();
        prop_assert_eq!(clustered.n_vectors(), m);
        for out in [&pooled, &clustered] {
            prop_assert!(out.vectors.rows_unit_norm(1e-4));
            prop_assert!(out.normalized);
        }
    }

    #[test]
    fn pool2d_tiles_the_grid(r in 1usize..12, c in 1usize..12, factor in 1.0f64..40.0) {
        let n = r * c;
        let rows: Vec<Vec<f32>> = (0..n).map(|i| vec![1.0, i as f32 * 0.01]).collect();
        let p = PageEmbeddings::new("p", Matrix::from_rows(&rows).unwrap(), Some(Grid::new(r, c))).unwrap();
        let (wr, wc) = pool2d_window(Grid::new(r, c), factor).unwrap();
        prop_assert!(wr >= 1 && wr <= r && wc >= 1 && wc <= c);
        let out = merge_pool_2d(&p, factor, false).unwrap();
        prop_assert_eq!(out.n_vectors(), r.div_ceil(wr) * c.div_ceil(wc));
    }

    #[test]
    fn fast_and_naive_agglomeration_agree(rows in rows_strategy(14, 3), k_frac in 0.0f64..1.0) {
        let rows = unit(rows);
        let p = page_of(&rows);
        let n = rows.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let d = cosine_distance_matrix(&p).unwrap();
        let fast = agglomerate(d.clone(), n, k).unwrap();
        prop_assert_eq!(&fast, &agglomerate_naive(d, n, k).unwrap());
        prop_assert_eq!(fast.n_clusters, k);
        // labels appear in order of first member
        let mut seen = 0;
        for &l in &fast.labels {
            prop_assert!(l <= seen);
            if l == seen { seen += 1; }
        }
    }

    #[test]
    fn ndcg_is_bounded_and_ignores_the_tail(
        rels in prop::collection::vec(0u32..4, 1..12),
        order_seed in any::<u64>(),
        k in 1usize..8,
    ) {
        prop_assume!(rels.iter().any(|&r| r > 0));
        let mut qrels = Qrels::new();
        for (i, &r) in rels.iter().enumerate() {
            qrels.insert("q", format!("d{i:02}"), r).unwrap();
        }
        let mut ids: Vec<usize> = (0..rels.len()).collect();
        for i in (1..ids.len()).rev() {
            ids.swap(i, (order_seed as usize).wrapping_mul(31 + i) % (i + 1));
        }
        let list = |ids: &[usize], extra: usize| RankedList {
            query_id: "q".into(),
            hits: ids.iter().map(|i| format!("d{i:02}"))
                .chain((0..extra).map(|e| format!("u{e}")))
                .enumerate()
                .map(|(r, page_id)| Hit { page_id, score: -(r as f32) })
                .collect(),
        };
        let v = ndcg_at_k(&list(&ids, 0), &qrels, k).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        prop_assert_eq!(v, ndcg_at_k(&list(&ids, 5), &qrels, k).unwrap());
        let mut ideal = ids.clone();
        ideal.sort_by(|a, b| rels[*b].cmp(&rels[*a]));
        prop_assert!((ndcg_at_k(&list(&ideal, 0), &qrels, k).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_potential_is_affine_invariant(values in prop::collection::vec(-10.0f32..10.0, 2..40), a in 0.5f32..4.0, b in -5.0f32..5.0) {
        let spread = values.iter().copied().fold(f32::NEG_INFINITY, f32::max) - values.iter().copied().fold(f32::INFINITY, f32::min);
        prop_assume!(spread > 1e-2);
        let x = normalize_values(&values).unwrap();
        let moved: Vec<f32> = values.iter().map(|v| a * v + b).collect();
        let y = normalize_values(&moved).unwrap();
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() < 1e-4);
        }
    }

    #[test]
    fn activated_sets_are_nested(values in prop::collection::vec(-1.0f32..1.0, 1..60), k1 in 1.0f64..100.0, k2 in 1.0f64..100.0) {
        let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
        let small = top_indices(&values, lo).unwrap();
        let big = top_indices(&values, hi).unwrap();
        prop_assert!(small.iter().all(|i| big.contains(i)));
    }

    #[test]
    fn mvec_round_trip(pages in prop::collection::vec(rows_strategy(6, 5), 0..6)) {
        let pages: Vec<PageEmbeddings> = pages.iter().enumerate().map(|(i, r)| {
            PageEmbeddings::new(format!("page-{i}"), Matrix::from_rows(r).unwrap(), None).unwrap()
        }).collect();
        let back = decode(&encode(&pages, DType::F32).unwrap()).unwrap();
        prop_assert_eq!(&back.records, &pages);
        let back16 = decode(&encode(&pages, DType::F16).unwrap()).unwrap();
        let max = pages.iter().flat_map(|p| p.vectors.as_slice()).fold(0.0f32, |m, v| m.max(v.abs()));
        for (a, b) in pages.iter().zip(&back16.records) {
            for (x, y) in a.vectors.as_slice().iter().zip(b.vectors.as_slice()) {
                prop_assert!((x - y).abs() <= max * 2f32.powi(-11));
            }
        }
    }
}

#[test]
fn random_pruning_draws_subsets_uniformly() {
    let rows: Vec<Vec<f32>> = (0..4).map(|i| vec![i as f32 + 1.0, 0.5]).collect();
    let p = page_of(&rows);
    let trials = 10_000;
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    for seed in 0..trials {
        let out = prune_random(&p, 0.5, seed).unwrap();
        let key: Vec<u32> = out.vectors.rows().map(|r| r[0] as u32).collect();
        *counts.entry(key).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    for (subset, c) in counts {
        let freq = c as f64 / trials as f64;
        assert!((freq - 1.0 / 6.0).abs() <= 0.02, "{subset:?}: {freq}");
    }
}
