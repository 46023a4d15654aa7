//! Generate the planted two-term data set for every configuration and
//! write the fused one as CSV.
//!
//! cargo run --example synthetic_dataset -- out.csv

use hemix::dataset::{generate_synthetic, split, DEFAULT_RATIOS};
use hemix::{Configuration, DescriptorScheme, ElementalTable, PlantedModel};

fn main() -> hemix::Result<()> {
    let table = ElementalTable::bundled();
    let scheme = DescriptorScheme::prior_knowledge();
    let model = PlantedModel::two_term().with_seed(7);

    let mut fused = None;
    for c in Configuration::ALL {
        let ds = generate_synthetic(&table, &scheme, &model, c, &DEFAULT_RATIOS)?;
        let y = ds.y();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let max = y.iter().cloned().fold(f64::MIN, f64::max);
        println!("{:<9} {:>5} points  {:>3} descriptors  mean {mean:.4}  max {max:.4} kJ/mol", c.name(), ds.len(), ds.labels.len());
        fused = Some(ds);
    }
    let fused = fused.unwrap();

    let plan = split(fused.len(), 0.8, 0)?;
    println!("80/20 split: {} train, {} test", plan.train.len(), plan.test.len());

    if let Some(path) = std::env::args().nth(1) {
        fused.write_csv(std::fs::File::create(&path)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
