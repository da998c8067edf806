//! Payload size of a full-size corpus in f32 and f16.

use mvec::store::{memory_footprint, MemoryReport};
use mvec::{DType, Matrix, PageEmbeddings};

fn main() -> mvec::Result<()> {
    let pages = (0..50)
        .map(|i| PageEmbeddings::new(format!("p{i}"), Matrix::new(vec![0.0; 768 * 128], 128)?, None))
        .collect::<mvec::Result<Vec<_>>>()?;
    for dtype in [DType::F32, DType::F16] {
        let r = MemoryReport::new(memory_footprint(&pages, dtype));
        println!("{dtype}: {} bytes, {:.3} MB, {:.3} MiB", r.bytes, r.mb_decimal, r.mib);
    }
    Ok(())
}
