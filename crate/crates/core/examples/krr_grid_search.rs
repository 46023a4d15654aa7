//! Grid-search all four kernel families on the fused data set, then
//! cross-validate the winner.
//!
//! cargo run --release --example krr_grid_search

use hemix::dataset::{generate_synthetic, split, DEFAULT_RATIOS};
use hemix::krr::{cross_validate, grid_search, overfit_diagnostic, LogRange};
use hemix::{Configuration, DescriptorScheme, ElementalTable, GridSpec, KernelFamily, PlantedModel};

fn main() -> hemix::Result<()> {
    let table = ElementalTable::bundled();
    let planted = generate_synthetic(
        &table,
        &DescriptorScheme::prior_knowledge(),
        &PlantedModel::two_term(),
        Configuration::Fused,
        &DEFAULT_RATIOS,
    )?;
    // same targets, kernel descriptors
    let ds = planted.redescribe(&table, &DescriptorScheme::krr_original())?;
    let xs: Vec<Vec<f64>> = ds.points.iter().map(|p| p.x.clone()).collect();
    let y = ds.y();
    let plan = split(ds.len(), 0.8, 0)?;

    // small enough to finish in well under a minute
    let grid = GridSpec {
        log_lambda: LogRange::new(-8.0, 0.0, 5),
        log_gamma: LogRange::new(-4.0, 0.0, 5),
        log_c: LogRange::new(-1.0, 1.0, 3),
        refinement_rounds: 1,
    };

    let families = [
        KernelFamily::Polynomial { degree: 2 },
        KernelFamily::Polynomial { degree: 3 },
        KernelFamily::Gaussian,
        KernelFamily::Laplacian,
    ];
    let mut best = None;
    println!("{:<10} {:>9} {:>9} {:>10} {:>10}  points", "family", "log λ", "log γ", "train MAE", "test MAE");
    for family in families {
        let r = grid_search(&xs, &y, &plan, family, &grid, true)?;
        let flag = overfit_diagnostic(&r.train, &r.test, 10.0);
        println!(
            "{:<10} {:>9.2} {:>9.2} {:>10.4} {:>10.4}  {}{}",
            family.name(),
            r.lambda.log10(),
            r.spec.gamma.log10(),
            r.train.mae,
            r.test.mae,
            r.scan.len(),
            if flag.flagged { "  overfit" } else { "" },
        );
        if best.as_ref().map_or(true, |(_, b): &(_, hemix::krr::GridResult)| r.test.mae < b.test.mae) {
            best = Some((family, r));
        }
    }

    let (family, r) = best.unwrap();
    let folds = cross_validate(&xs, &y, 5, 1, &r.spec, r.lambda, true)?;
    let maes: Vec<String> = folds.iter().map(|f| format!("{:.4}", f.test.mae)).collect();
    println!("\n{} 5-fold test MAE: {}", family.name(), maes.join(" "));
    Ok(())
}
