//! Exhaustive best-subset search over a hand-picked set of candidate
//! columns. Targets are the noiseless Margules baseline on monazite.
//!
//! cargo run --release --example best_subset

use hemix::dataset::{generate_synthetic, DEFAULT_RATIOS};
use hemix::features::expand;
use hemix::sparsify::l0_search;
use hemix::{Configuration, DescriptorScheme, ElementalTable, PlantedModel};

// column labels list factors in descriptor order, so compare as multisets
fn factors(l: &str) -> Vec<&str> {
    let mut f: Vec<&str> = l.split('*').collect();
    f.sort_unstable();
    f
}

fn main() -> hemix::Result<()> {
    let table = ElementalTable::bundled();
    let scheme = DescriptorScheme::prior_knowledge();
    let ds = generate_synthetic(&table, &scheme, &PlantedModel::margules(), Configuration::MonaziteOnly, &DEFAULT_RATIOS)?;
    let y = ds.y();
    let fm = expand(&ds.matrix(), &ds.labels, 3)?;

    let candidates = [
        "m*(1-m)*diff(V)^2",
        "m*(1-m)*diff(R)^2",
        "diff(V)^2",
        "diff(V)^2*inv(mean(V))",
        "m*diff(V)^2",
        "(1-m)*diff(V)^2",
        "diff(Y)*diff(V)",
        "m*(1-m)*diff(Z)",
    ];
    let idx: Vec<usize> = candidates
        .iter()
        .map(|l| {
            fm.labels
                .iter()
                .position(|c| factors(c) == factors(l))
                .ok_or_else(|| hemix::Error::UnknownLabel(l.to_string()))
        })
        .collect::<hemix::Result<_>>()?;
    let cols: Vec<Vec<f64>> = idx.iter().map(|&j| fm.raw_column(j)).collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    let labels: Vec<String> = idx.iter().map(|&j| fm.labels[j].clone()).collect();

    for f in l0_search(&refs, &labels, &y, 4, 40)? {
        println!("k={}  MAE {:.5}  MSE {:.3e}  {}", f.k, f.errors.mae, f.errors.mse, f.render());
    }
    Ok(())
}
