//! Writes a corpus as f32 and f16 MVEC files and reads both back.

use mvec::synthetic::{generate, SyntheticSpec};
use mvec::{Corpus, DType};

fn main() -> mvec::Result<()> {
    let data = generate(&SyntheticSpec { pages: 5, ..Default::default() })?;
    let dir = std::env::temp_dir().join("mvec-roundtrip");
    std::fs::create_dir_all(&dir).map_err(|e| mvec::Error::Io { path: dir.clone(), source: e })?;
    for dtype in [DType::F32, DType::F16] {
        let path = dir.join(format!("corpus-{dtype}.mvec"));
        let c = Corpus::new("demo", data.corpus.pages().to_vec(), dtype)?;
        c.save(&path)?;
        let back = Corpus::load(&path)?;
        let err = c
            .pages()
            .iter()
            .zip(back.pages())
            .flat_map(|(a, b)| a.vectors.as_slice().iter().zip(b.vectors.as_slice()))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        println!("{}: {} pages, max abs error {err:e}", path.display(), back.len());
    }
    Ok(())
}
