//! In-memory and on-disk representation of page and query embedding collections.
//!
//! A page is stored as a dense row-major `N_p x d` matrix of `f32`. All arithmetic
//! happens in `f32`; `f16` exists only as a storage type in MVEC files.

mod aux;
pub mod format;
mod memory;
mod qrels;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use aux::{
    load_attention, load_synth_queries, write_attention, write_synth_queries, AuxStore, PageAux,
};
pub use memory::{memory_footprint, relative_memory, MemoryReport};
pub use qrels::Qrels;

/// Tolerance on `| ||row|| - 1 |` for rows flagged as normalized.
pub const NORM_TOLERANCE_F32: f32 = 1e-4;
/// Half precision cannot hold a unit norm to 1e-4, so `f16` corpora get a looser bound.
pub const NORM_TOLERANCE_F16: f32 = 1e-3;

/// Element type of the vector payload in an MVEC file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F16,
}

impl DType {
    pub fn bytes_per_element(self) -> u64 {
        match self {
            DType::F32 => 4,
            DType::F16 => 2,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F16 => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F16),
            _ => None,
        }
    }

    pub fn norm_tolerance(self) -> f32 {
        match self {
            DType::F32 => NORM_TOLERANCE_F32,
            DType::F16 => NORM_TOLERANCE_F16,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::F32 => "f32",
            DType::F16 => "f16",
        })
    }
}

impl std::str::FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(DType::F32),
            "f16" => Ok(DType::F16),
            other => Err(Error::validation(format!("unknown dtype {other:?}"))),
        }
    }
}

/// Dense row-major matrix with at least one row and one column, all values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f32>,
    dim: usize,
}

impl Matrix {
    pub fn new(data: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("vector dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::validation("a vector set needs at least one row"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::validation(format!(
                "{} values do not divide into rows of length {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Matrix { data, dim })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::validation(format!(
                    "row {i} has length {}, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Matrix::new(data, dim)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Keeps the listed rows, in the order given.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(data, self.dim)
    }

    /// True when every row's L2 norm is within `tol` of 1.
    pub fn rows_unit_norm(&self, tol: f32) -> bool {
        self.rows().all(|r| (l2_norm(r) - 1.0).abs() <= tol)
    }
}

#[inline]
pub(crate) fn l2_norm(v: &[f32]) -> f32 {
    v.iter().map(|x| x * x).sum::<f32>().sqrt()
}

/// 2D patch layout of a page; rows are stored in row-major grid order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub fn new(rows: usize, cols: usize) -> Self {
        Grid { rows, cols }
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Patch-level embeddings of one page.
#[derive(Debug, Clone, PartialEq)]
pub struct PageEmbeddings {
    pub id: String,
    pub vectors: Matrix,
    pub grid: Option<Grid>,
    pub normalized: bool,
}

impl PageEmbeddings {
    /// Builds a page, checking the grid against the row count. The `normalized`
    /// flag is derived from the data at `f32` tolerance.
    pub fn new(id: impl Into<String>, vectors: Matrix, grid: Option<Grid>) -> Result<Self> {
        let normalized = vectors.rows_unit_norm(NORM_TOLERANCE_F32);
        let page = PageEmbeddings {
            id: id.into(),
            vectors,
            grid,
            normalized,
        };
        page.validate(NORM_TOLERANCE_F32)?;
        Ok(page)
    }

    pub fn n_vectors(&self) -> usize {
        self.vectors.n_rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn validate(&self, norm_tol: f32) -> Result<()> {
        if let Some(g) = self.grid {
            if g.rows == 0 || g.cols == 0 {
                return Err(Error::validation(format!(
                    "page {:?}: grid {g} has a zero side",
                    self.id
                )));
            }
            if g.cells() != self.n_vectors() {
                return Err(Error::validation(format!(
                    "page {:?}: grid {g} describes {} patches but the page has {}",
                    self.id,
                    g.cells(),
                    self.n_vectors()
                )));
            }
        }
        if self.normalized && !self.vectors.rows_unit_norm(norm_tol) {
            return Err(Error::validation(format!(
                "page {:?} is flagged normalized but has a row norm outside 1 ± {norm_tol}",
                self.id
            )));
        }
        Ok(())
    }
}

/// Token-level embeddings of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbeddings {
    pub id: String,
    pub vectors: Matrix,
    pub normalized: bool,
}

impl QueryEmbeddings {
    pub fn new(id: impl Into<String>, vectors: Matrix) -> Self {
        let normalized = vectors.rows_unit_norm(NORM_TOLERANCE_F32);
        QueryEmbeddings {
            id: id.into(),
            vectors,
            normalized,
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.vectors.n_rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }
}

impl From<PageEmbeddings> for QueryEmbeddings {
    fn from(p: PageEmbeddings) -> Self {
        QueryEmbeddings {
            id: p.id,
            vectors: p.vectors,
            normalized: p.normalized,
        }
    }
}

impl From<QueryEmbeddings> for PageEmbeddings {
    fn from(q: QueryEmbeddings) -> Self {
        PageEmbeddings {
            id: q.id,
            vectors: q.vectors,
            grid: None,
            normalized: q.normalized,
        }
    }
}

/// Which compression produced a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Score,
    Attention,
    Pool1d,
    Pool2d,
    Cluster,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Score => "score",
            Strategy::Attention => "attention",
            Strategy::Pool1d => "pool1d",
            Strategy::Pool2d => "pool2d",
            Strategy::Cluster => "cluster",
        }
    }

    pub fn is_pruning(self) -> bool {
        matches!(self, Strategy::Random | Strategy::Score | Strategy::Attention)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "random" => Strategy::Random,
            "score" | "score_oriented" => Strategy::Score,
            "attention" | "attention_oriented" => Strategy::Attention,
            "pool1d" => Strategy::Pool1d,
            "pool2d" => Strategy::Pool2d,
            "cluster" => Strategy::Cluster,
            other => return Err(Error::validation(format!("unknown strategy {other:?}"))),
        })
    }
}

/// How a compressed corpus was derived from its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: Strategy,
    /// Pruning ratio for pruning strategies, merging factor for merging approaches.
    pub parameter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renormalize: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub d: usize,
    pub page_count: usize,
    pub dtype: DType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// An immutable collection of (possibly compressed) pages with uniform `d`
/// and unique page ids. This is what retrieval runs against.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pages: Vec<PageEmbeddings>,
}

impl Corpus {
    pub fn new(
        corpus_id: impl Into<String>,
        pages: Vec<PageEmbeddings>,
        dtype: DType,
    ) -> Result<Self> {
        let d = check_uniform_dim(&pages)?;
        let mut seen = BTreeSet::new();
        for p in &pages {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::validation(format!("duplicate page id {:?}", p.id)));
            }
        }
        Ok(Corpus {
            manifest: CorpusManifest {
                corpus_id: corpus_id.into(),
                d: d.unwrap_or(0),
                page_count: pages.len(),
                dtype,
                provenance: None,
            },
            pages,
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.manifest.provenance = Some(provenance);
        self
    }

    pub fn pages(&self) -> &[PageEmbeddings] {
        &self.pages
    }

    pub fn into_pages(self) -> Vec<PageEmbeddings> {
        self.pages
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.manifest.d
    }

    pub fn dtype(&self) -> DType {
        self.manifest.dtype
    }

    pub fn get(&self, page_id: &str) -> Option<&PageEmbeddings> {
        self.pages.iter().find(|p| p.id == page_id)
    }

    pub fn footprint(&self) -> u64 {
        memory_footprint(&self.pages, self.manifest.dtype)
    }

    /// Reads an MVEC file and its manifest sidecar, if present.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ingest_corpus(path)
    }

    /// Writes the MVEC payload plus a JSON manifest sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_corpus(&self.pages, self.manifest.dtype, path)?;
        let manifest = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::validation(format!("cannot serialize manifest: {e}")))?;
        let mpath = manifest_path(path);
        std::fs::write(&mpath, manifest + "\n").map_err(|e| Error::io(mpath, e))
    }
}

pub(crate) fn check_uniform_dim(pages: &[PageEmbeddings]) -> Result<Option<usize>> {
    let Some(first) = pages.first() else {
        return Ok(None);
    };
    let d = first.dim();
    for p in pages {
        if p.dim() != d {
            return Err(Error::validation(format!(
                "page {:?} has d = {}, but the corpus has d = {d}",
                p.id,
                p.dim()
            )));
        }
    }
    Ok(Some(d))
}

/// Sidecar file holding the [`CorpusManifest`] of `<file>.mvec`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Loads every page of an MVEC file, validating all invariants. Provenance is
/// taken from the manifest sidecar when one exists.
pub fn ingest_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = format::read_mvec(path)?;
    let corpus_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut corpus = Corpus::new(corpus_id, file.records, file.dtype)?;
    if corpus.is_empty() {
        corpus.manifest.d = file.dim;
    }
    let mpath = manifest_path(path);
    if mpath.exists() {
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: CorpusManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", mpath.display())))?;
        if manifest.d != corpus.manifest.d
            || manifest.page_count != corpus.manifest.page_count
            || manifest.dtype != corpus.manifest.dtype
        {
            return Err(Error::validation(format!(
                "manifest {} disagrees with the MVEC header",
                mpath.display()
            )));
        }
        corpus.manifest = manifest;
    }
    Ok(corpus)
}

/// Writes pages to an MVEC file. Pages must share `d`.
pub fn write_corpus(pages: &[PageEmbeddings], dtype: DType, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = format::encode(pages, dtype)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a query file (MVEC; grid metadata is ignored).
pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<QueryEmbeddings>> {
    let file = format::read_mvec(path.as_ref())?;
    let mut seen = BTreeSet::new();
    for r in &file.records {
        if !seen.insert(r.id.clone()) {
            return Err(Error::validation(format!("duplicate query id {:?}", r.id)));
        }
    }
    Ok(file.records.into_iter().map(QueryEmbeddings::from).collect())
}

pub fn write_queries(queries: &[QueryEmbeddings], dtype: DType, path: impl AsRef<Path>) -> Result<()> {
    let pages: Vec<PageEmbeddings> = queries.iter().cloned().map(PageEmbeddings::from).collect();
    write_corpus(&pages, dtype, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_mismatch_is_rejected() {
        let m = Matrix::new(vec![0.0; 12], 3).unwrap();
        let err = PageEmbeddings::new("p", m, Some(Grid::new(2, 3))).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn matrix_rejects_non_finite_and_empty() {
        assert!(Matrix::new(vec![1.0, f32::NAN], 2).is_err());
        assert!(Matrix::new(vec![1.0, f32::INFINITY], 1).is_err());
        assert!(Matrix::new(vec![], 4).is_err());
        assert!(Matrix::new(vec![1.0; 4], 0).is_err());
        assert!(Matrix::new(vec![1.0; 5], 2).is_err());
    }

    #[test]
    fn normalized_flag_is_detected() {
        let unit = Matrix::from_rows(&[[1.0f32, 0.0], [0.6, 0.8]]).unwrap();
        assert!(PageEmbeddings::new("a", unit, None).unwrap().normalized);
        let raw = Matrix::from_rows(&[[2.0f32, 0.0]]).unwrap();
        assert!(!PageEmbeddings::new("b", raw, None).unwrap().normalized);
    }

    #[test]
    fn corpus_rejects_mixed_dims_and_duplicate_ids() {
        let a = PageEmbeddings::new("a", Matrix::new(vec![1.0; 4], 2).unwrap(), None).unwrap();
        let b = PageEmbeddings::new("b", Matrix::new(vec![1.0; 3], 3).unwrap(), None).unwrap();
        assert!(Corpus::new("c", vec![a.clone(), b], DType::F32).is_err());
        assert!(Corpus::new("c", vec![a.clone(), a], DType::F32).is_err());
    }
}
