//! Expand the monazite descriptors into all products up to degree 3,
//! and show pruning and the on-disk cache.
//!
//! cargo run --release --example feature_expansion

use hemix::dataset::{generate_synthetic, DEFAULT_RATIOS};
use hemix::features::{expand_cached, tier_size};
use hemix::{Configuration, DescriptorScheme, ElementalTable, PlantedModel};

fn main() -> hemix::Result<()> {
    let table = ElementalTable::bundled();
    let scheme = DescriptorScheme::prior_knowledge();
    let ds = generate_synthetic(&table, &scheme, &PlantedModel::margules(), Configuration::MonaziteOnly, &DEFAULT_RATIOS)?;
    let d = ds.labels.len();

    let dir = tempfile::tempdir()?;
    for pass in ["cold", "warm"] {
        let t = std::time::Instant::now();
        let (fm, path) = expand_cached(&ds.matrix(), &ds.labels, 3, "example", dir.path())?;
        println!("{pass}: {} columns in {:.2?} ({})", fm.ncols(), t.elapsed(), path.file_name().unwrap().to_string_lossy());
        if pass == "warm" {
            for (k, (&total, kept)) in fm.tier_counts.iter().zip(fm.kept_per_tier()).enumerate() {
                println!("  degree {}: {total:>6} candidates (C({}+{k},{}) = {}), {kept:>6} kept", k + 1, d, k + 1, tier_size(d, k + 1));
            }
            for p in fm.pruned.iter().take(5) {
                println!("  pruned {p:?}");
            }
            println!("  ... {} pruned in total", fm.pruned.len());
        }
    }
    Ok(())
}
