//! MVEC binary container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! header   magic "MVEC" | version u32 = 1 | dtype u8 (0 = f32, 1 = f16) | 3 reserved zero bytes
//!          | page_count u64 | d u32
//! record   id_len u16 | id (UTF-8) | n_vectors u32 | grid_rows u16 | grid_cols u16 (0,0 = no grid)
//!          | normalized u8 | n_vectors * d elements, row-major
//! ```
//!
//! Nothing follows the last record. Readers never allocate more than the
//! remaining input can back, so corrupt counts fail as format errors.

use std::path::Path;

use half::f16;

use super::{check_uniform_dim, DType, Grid, Matrix, PageEmbeddings};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MVEC";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

/// Decoded contents of an MVEC file.
#[derive(Debug, Clone, PartialEq)]
pub struct MvecFile {
    pub dtype: DType,
    pub dim: usize,
    pub records: Vec<PageEmbeddings>,
}

pub fn read_mvec(path: &Path) -> Result<MvecFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(format!(
                "truncated input reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode(bytes: &[u8]) -> Result<MvecFile> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::format("bad magic, expected \"MVEC\""));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let code = cur.u8("dtype")?;
    let dtype =
        DType::from_code(code).ok_or_else(|| Error::format(format!("unknown dtype code {code}")))?;
    if cur.take(3, "reserved")? != [0, 0, 0] {
        return Err(Error::format("reserved header bytes are not zero"));
    }
    let page_count = cur.u64("page_count")?;
    let dim = cur.u32("d")? as usize;
    if dim == 0 {
        return Err(Error::format("header declares d = 0"));
    }
    // Smallest possible record: 2 + 4 + 2 + 2 + 1 bytes of metadata.
    if page_count > (cur.remaining() / 11) as u64 {
        return Err(Error::format(format!(
            "header declares {page_count} records but only {} bytes follow",
            cur.remaining()
        )));
    }

    let elem = dtype.bytes_per_element() as usize;
    // Framing first: a structurally broken file is a format error even when
    // some earlier record would also fail value checks.
    let mut raw = Vec::with_capacity(page_count as usize);
    for index in 0..page_count {
        let id_len = cur.u16("id_len")? as usize;
        let id = std::str::from_utf8(cur.take(id_len, "record id")?)
            .map_err(|_| Error::format(format!("record {index}: id is not valid UTF-8")))?
            .to_owned();
        let n_vectors = cur.u32("n_vectors")? as usize;
        let grid_rows = cur.u16("grid_rows")? as usize;
        let grid_cols = cur.u16("grid_cols")? as usize;
        let normalized = match cur.u8("normalized")? {
            0 => false,
            1 => true,
            other => {
                return Err(Error::format(format!(
                    "record {id:?}: normalized flag must be 0 or 1, got {other}"
                )))
            }
        };
        let grid = match (grid_rows, grid_cols) {
            (0, 0) => None,
            (r, c) => Some(Grid::new(r, c)),
        };
        let payload_len = n_vectors
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(elem))
            .ok_or_else(|| {
                Error::validation(format!("record {id:?}: n_vectors * d overflows"))
            })?;
        let payload = cur.take(payload_len, "vector payload")?;
        raw.push((id, n_vectors, grid, normalized, payload));
    }
    if cur.remaining() != 0 {
        return Err(Error::format(format!(
            "{} trailing bytes after the last record",
            cur.remaining()
        )));
    }

    let mut records = Vec::with_capacity(raw.len());
    for (id, n_vectors, grid, normalized, payload) in raw {
        if n_vectors == 0 {
            return Err(Error::validation(format!("record {id:?} has no vectors")));
        }
        let data: Vec<f32> = match dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            DType::F16 => payload
                .chunks_exact(2)
                .map(|c| f16::from_le_bytes(c.try_into().unwrap()).to_f32())
                .collect(),
        };
        let vectors = Matrix::new(data, dim)
            .map_err(|e| Error::validation(format!("record {id:?}: {e}")))?;
        let page = PageEmbeddings {
            id,
            vectors,
            grid,
            normalized,
        };
        page.validate(dtype.norm_tolerance())?;
        records.push(page);
    }
    Ok(MvecFile {
        dtype,
        dim,
        records,
    })
}

/// Serializes pages. An empty page list encodes `d = 1`, since a header
/// cannot declare `d = 0`.
pub fn encode(pages: &[PageEmbeddings], dtype: DType) -> Result<Vec<u8>> {
    let dim = check_uniform_dim(pages)?.unwrap_or(1);
    encode_with_dim(pages, dtype, dim)
}

pub(crate) fn encode_with_dim(pages: &[PageEmbeddings], dtype: DType, dim: usize) -> Result<Vec<u8>> {
    let dim32 = u32::try_from(dim).map_err(|_| Error::validation("d does not fit in u32"))?;
    let payload: usize = pages
        .iter()
        .map(|p| 16 + p.id.len() + p.vectors.as_slice().len() * dtype.bytes_per_element() as usize)
        .sum();
    let mut out = Vec::with_capacity(HEADER_LEN + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype.code());
    out.extend_from_slice(&[0, 0, 0]);
    out.extend_from_slice(&(pages.len() as u64).to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());

    for p in pages {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: p.dim(),
            });
        }
        let id_len = u16::try_from(p.id.len())
            .map_err(|_| Error::validation(format!("page id {:?} longer than 65535 bytes", p.id)))?;
        let n = u32::try_from(p.n_vectors())
            .map_err(|_| Error::validation(format!("page {:?} has too many vectors", p.id)))?;
        let (gr, gc) = match p.grid {
            Some(g) => (
                u16::try_from(g.rows).map_err(|_| Error::validation("grid rows exceed u16"))?,
                u16::try_from(g.cols).map_err(|_| Error::validation("grid cols exceed u16"))?,
            ),
            None => (0, 0),
        };
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(p.id.as_bytes());
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&gr.to_le_bytes());
        out.extend_from_slice(&gc.to_le_bytes());
        out.push(p.normalized as u8);
        match dtype {
            DType::F32 => {
                for v in p.vectors.as_slice() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            DType::F16 => {
                for &v in p.vectors.as_slice() {
                    let h = f16::from_f32(v);
                    if !h.is_finite() {
                        return Err(Error::validation(format!(
                            "page {:?}: value {v} is out of half-precision range",
                            p.id
                        )));
                    }
                    out.extend_from_slice(&h.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}
