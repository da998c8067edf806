use super::{check_factor, merge_groups, merged_count};
use crate::error::{Error, Result};
use crate::store::{Grid, PageEmbeddings};

/// Averages contiguous runs of the flattened patch sequence. Runs differ in
/// length by at most one, longer runs first.
pub fn merge_pool_1d(p: &PageEmbeddings, factor: f64, renormalize: bool) -> Result<PageEmbeddings> {
    let n = p.n_vectors();
    let m = merged_count(n, factor)?;
    let (base, extra) = (n / m, n % m);
    let mut groups = Vec::with_capacity(m);
    let mut start = 0;
    for run in 0..m {
        let len = base + usize::from(run < extra);
        groups.push((start..start + len).collect());
        start += len;
    }
    let grid = if m == n { p.grid } else { None };
    merge_groups(p, &groups, grid, renormalize)
}

/// Window `(rows, cols)` whose area is closest to `factor`, preferring square
/// windows and then the taller one. Windows never exceed the grid.
pub fn pool2d_window(grid: Grid, factor: f64) -> Result<(usize, usize)> {
    check_factor(factor)?;
    let mut best: Option<((f64, usize), (usize, usize))> = None;
    for wr in 1..=grid.rows {
        for wc in 1..=grid.cols {
            let key = ((wr * wc) as f64 - factor).abs();
            let skew = wr.abs_diff(wc);
            let better = match best {
                None => true,
                Some(((bk, bskew), (bwr, _))) => {
                    key < bk || (key == bk && (skew < bskew || (skew == bskew && wr > bwr)))
                }
            };
            if better {
                best = Some(((key, skew), (wr, wc)));
            }
        }
    }
    Ok(best.expect("grid has at least one cell").1)
}

/// Averages rectangular windows tiled from the top-left of the patch grid.
/// Windows at the right and bottom edges hold whatever cells remain.
pub fn merge_pool_2d(p: &PageEmbeddings, factor: f64, renormalize: bool) -> Result<PageEmbeddings> {
    let grid = p.grid.ok_or_else(|| {
        Error::validation(format!("page {:?} has no grid; 2D pooling needs one", p.id))
    })?;
    let (wr, wc) = pool2d_window(grid, factor)?;
    let out = Grid::new(grid.rows.div_ceil(wr), grid.cols.div_ceil(wc));
    let mut groups = Vec::with_capacity(out.cells());
    for tr in 0..out.rows {
        for tc in 0..out.cols {
            let rows = tr * wr..((tr + 1) * wr).min(grid.rows);
            let cols = tc * wc..((tc + 1) * wc).min(grid.cols);
            let members: Vec<usize> = rows
                .flat_map(|r| cols.clone().map(move |c| r * grid.cols + c))
                .collect();
            groups.push(members);
        }
    }
    merge_groups(p, &groups, Some(out), renormalize)
}
