//! Inspect the bundled elemental table and round-trip it through CSV.
//!
//! cargo run --example elementals

use hemix::{Element, ElementalTable, Phase, Property};

fn main() -> hemix::Result<()> {
    let table = ElementalTable::bundled();

    println!("{:<4} {:>9} {:>9} {:>9} {:>9}", "", "V (mnz)", "Y (mnz)", "V (xnt)", "Y (xnt)");
    for e in Element::ALL {
        println!(
            "{:<4} {:>9.2} {:>9.1} {:>9.2} {:>9.1}",
            e.symbol(),
            table.get(e, Phase::Monazite, Property::V),
            table.get(e, Phase::Monazite, Property::Y),
            table.get(e, Phase::Xenotime, Property::V),
            table.get(e, Phase::Xenotime, Property::Y),
        );
    }

    let mut buf = Vec::new();
    table.write(&mut buf)?;
    let again = ElementalTable::from_reader(buf.as_slice())?;
    assert_eq!(again.get(Element::Gd, Phase::Xenotime, Property::R), table.get(Element::Gd, Phase::Xenotime, Property::R));
    println!("\nround trip through {} bytes of CSV ok", buf.len());
    Ok(())
}
