//! Average-linkage clustering of one page whose rows form duplicate groups.

use mvec::merging::hierarchical_cluster;
use mvec::synthetic::duplicate_group_page;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mvec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let page = duplicate_group_page("demo", 4, 3, 8, &mut rng)?;
    let assignment = hierarchical_cluster(&page, 4)?;
    println!("labels: {:?}", assignment.labels);
    for (label, members) in assignment.groups().iter().enumerate() {
        println!("cluster {label}: rows {members:?}");
    }
    Ok(())
}
