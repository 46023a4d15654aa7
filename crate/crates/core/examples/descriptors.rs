//! Describe one solid solution with both descriptor families.
//!
//! cargo run --example descriptors -- La Lu 0.25 monazite

use hemix::descriptors::{build_krr_descriptors, build_prior_descriptors};
use hemix::{DescriptorScheme, ElementalTable, MixPair, Property};

fn main() -> hemix::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let m: f64 = arg(2, "0.25").parse().map_err(|_| hemix::Error::InvalidInput("m must be a number".into()))?;
    let pair = MixPair::new(arg(0, "La").parse()?, arg(1, "Lu").parse()?, m, arg(3, "monazite").parse()?)?;
    let table = ElementalTable::bundled();

    let krr = build_krr_descriptors(&table, &pair, &Property::ALL)?;
    println!("{pair}: {} kernel descriptors", krr.len());
    for (l, v) in krr.labels.iter().zip(&krr.values).take(9) {
        println!("  {l:<12} {v:>12.5}");
    }

    let (prior, dropped) = build_prior_descriptors(&table, &pair, &DescriptorScheme::prior_knowledge())?;
    println!("\n{} knowledge-constrained descriptors", prior.len());
    for l in ["m", "(1-m)", "mean(V)", "diff(V)", "diff(V)^2", "inv(mean(V)^2)", "diff(Y)"] {
        println!("  {l:<16} {:>12.5}", prior.get(l).unwrap_or(f64::NAN));
    }
    if !dropped.is_empty() {
        println!("dropped (non-finite): {dropped:?}");
    }
    Ok(())
}
