//! Trace an ℓ1 path over degree-2 products and pick the screening support.
//!
//! cargo run --release --example lasso_path

use hemix::dataset::{generate_synthetic, DEFAULT_RATIOS};
use hemix::features::{expand, standardize};
use hemix::sparsify::{lambda_max, lasso_path, linear_path, select_support, PathOptions};
use hemix::{Configuration, DescriptorScheme, ElementalTable, PlantedModel};

fn main() -> hemix::Result<()> {
    let table = ElementalTable::bundled();
    let scheme = DescriptorScheme::prior_knowledge();
    let ds = generate_synthetic(&table, &scheme, &PlantedModel::two_term(), Configuration::XenotimeOnly, &DEFAULT_RATIOS)?;
    let y = ds.y();

    let (fm, _) = standardize(expand(&ds.matrix(), &ds.labels, 2)?);
    let lmax = lambda_max(&fm.columns, &y, true);
    println!("{} columns, raw λ_max {lmax:.4e}", fm.ncols());

    let lambdas = linear_path(0.001, 0.005, 0.096);
    let (report, path) = lasso_path(&fm.columns, &y, &lambdas, &PathOptions::default())?;
    println!("{:>8} {:>7} {:>10} {:>6}", "λ̂", "active", "MAE", "sweeps");
    for p in report.points.iter().step_by(3) {
        println!("{:>8.3} {:>7} {:>10.4} {:>6}", p.lambda_hat, p.active_size, p.errors.mae, p.iterations);
    }

    let support = select_support(&path, 30)?;
    println!("\nsupport ({}):", support.len());
    for &j in support.iter().take(10) {
        println!("  {}", fm.labels[j]);
    }
    Ok(())
}
