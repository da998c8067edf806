use serde::Serialize;

use super::{Corpus, DType, PageEmbeddings};
use crate::error::{Error, Result};

/// Vector payload bytes: `sum(N_p) * d * bytes_per_element`. Headers and ids are not counted.
pub fn memory_footprint(pages: &[PageEmbeddings], dtype: DType) -> u64 {
    pages
        .iter()
        .map(|p| p.n_vectors() as u64 * p.dim() as u64)
        .sum::<u64>()
        * dtype.bytes_per_element()
}

/// Payload footprint of `candidate` relative to `baseline`.
pub fn relative_memory(candidate: &Corpus, baseline: &Corpus) -> Result<f64> {
    if candidate.dtype() != baseline.dtype() {
        return Err(Error::validation(format!(
            "cannot compare a {} corpus against a {} baseline",
            candidate.dtype(),
            baseline.dtype()
        )));
    }
    if candidate.is_empty() || baseline.is_empty() {
        return Err(Error::validation("relative memory needs non-empty corpora"));
    }
    let base = baseline.footprint();
    if base == 0 {
        return Err(Error::validation("baseline footprint is zero"));
    }
    Ok(candidate.footprint() as f64 / base as f64)
}

/// Byte count with the common megabyte conventions side by side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemoryReport {
    pub bytes: u64,
    /// 10^6 bytes.
    pub mb_decimal: f64,
    /// 2^20 bytes.
    pub mib: f64,
    /// 1,024,000 bytes, the mixed convention under which 9,830,400 bytes reads as 9.6 MB.
    pub mb_mixed: f64,
}

impl MemoryReport {
    pub fn new(bytes: u64) -> Self {
        MemoryReport {
            bytes,
            mb_decimal: bytes as f64 / 1e6,
            mib: bytes as f64 / 1_048_576.0,
            mb_mixed: bytes as f64 / 1_024_000.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Matrix;

    fn pages(sizes: &[usize], d: usize) -> Vec<PageEmbeddings> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                PageEmbeddings::new(format!("p{i}"), Matrix::new(vec![0.5; n * d], d).unwrap(), None)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn footprint_hand_sums() {
        assert_eq!(memory_footprint(&[], DType::F16), 0);
        assert_eq!(memory_footprint(&pages(&[10, 20, 30], 8), DType::F32), 1920);
    }

    #[test]
    fn storage_example_from_a_fifty_page_document() {
        let bytes = 50u64 * 768 * 128 * DType::F16.bytes_per_element();
        let r = MemoryReport::new(bytes);
        assert_eq!(r.bytes, 9_830_400);
        assert!((r.mb_decimal - 9.8304).abs() < 1e-12);
        assert!((r.mb_mixed - 9.6).abs() < 1e-12);
    }

    #[test]
    fn relative_memory_identities() {
        let base = Corpus::new("b", pages(&[768, 768], 128), DType::F16).unwrap();
        assert_eq!(relative_memory(&base, &base).unwrap(), 1.0);
        let single = Corpus::new("s", pages(&[1, 1], 128), DType::F16).unwrap();
        assert_eq!(relative_memory(&base, &single).unwrap(), 768.0);
        let f32c = Corpus::new("f", pages(&[1], 128), DType::F32).unwrap();
        assert!(relative_memory(&f32c, &base).is_err());
        let empty = Corpus::new("e", vec![], DType::F16).unwrap();
        assert!(relative_memory(&base, &empty).is_err());
    }

    #[test]
    fn footprint_is_additive() {
        let a = pages(&[3, 5], 4);
        let b = pages(&[7], 4);
        let all: Vec<_> = a.iter().chain(b.iter()).cloned().collect();
        assert_eq!(
            memory_footprint(&all, DType::F16),
            memory_footprint(&a, DType::F16) + memory_footprint(&b, DType::F16)
        );
    }
}
