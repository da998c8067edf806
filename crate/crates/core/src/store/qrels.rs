use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Graded relevance judgments, `query_id -> page_id -> grade`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    entries: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one judgment. A repeated `(query_id, page_id)` pair is an error.
    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        page_id: impl Into<String>,
        relevance: u32,
    ) -> Result<()> {
        let (q, p) = (query_id.into(), page_id.into());
        let judged = self.entries.entry(q.clone()).or_default();
        if judged.contains_key(&p) {
            return Err(Error::validation(format!(
                "duplicate judgment for ({q:?}, {p:?})"
            )));
        }
        judged.insert(p, relevance);
        Ok(())
    }

    pub fn judgments(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.entries.get(query_id)
    }

    pub fn relevance(&self, query_id: &str, page_id: &str) -> u32 {
        self.entries
            .get(query_id)
            .and_then(|j| j.get(page_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `query_id<TAB>page_id<TAB>relevance` lines. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut qrels = Qrels::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [q, p, rel] = fields[..] else {
                return Err(Error::format(format!(
                    "qrels line {}: expected 3 tab-separated fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            };
            let rel: u32 = rel.trim().parse().map_err(|_| {
                Error::format(format!(
                    "qrels line {}: relevance {rel:?} is not a non-negative integer",
                    lineno + 1
                ))
            })?;
            if q.is_empty() || p.is_empty() {
                return Err(Error::format(format!("qrels line {}: empty id", lineno + 1)));
            }
            qrels.insert(q, p, rel)?;
        }
        Ok(qrels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (q, judged) in &self.entries {
            for (p, rel) in judged {
                let _ = writeln!(out, "{q}\t{p}\t{rel}");
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let q = Qrels::parse_tsv("q1\tp1\t1\nq1\tp2\t0\n\n# comment\nq2\tp9\t3\n").unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(q.relevance("q2", "p9"), 3);
        assert_eq!(q.relevance("q2", "nope"), 0);
        assert_eq!(Qrels::parse_tsv(&q.to_tsv()).unwrap(), q);
    }

    #[test]
    fn rejects_duplicates_and_bad_lines() {
        assert!(matches!(
            Qrels::parse_tsv("q\tp\t1\nq\tp\t2\n"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(Qrels::parse_tsv("q\tp\n"), Err(Error::Format(_))));
        assert!(matches!(Qrels::parse_tsv("q\tp\t-1\n"), Err(Error::Format(_))));
    }
}
