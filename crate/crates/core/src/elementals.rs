//! Per-lanthanide elemental property tables.
//!
//! A table stores one record of ten properties for every (element, phase)
//! pair. Ionic radius `R` is read at coordination 9 for monazite and
//! coordination 8 for xenotime; `Y` and `V` are properties of the LnPO4
//! compound in that phase. The remaining properties are phase independent
//! but are stored per phase so every lookup goes through the same path.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The bundled property table (see `data/lanthanides.csv`).
pub const BUNDLED_CSV: &str = include_str!("../data/lanthanides.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Element {
    La,
    Ce,
    Pr,
    Nd,
    Pm,
    Sm,
    Eu,
    Gd,
    Tb,
    Dy,
    Ho,
    Er,
    Tm,
    Yb,
    Lu,
}

impl Element {
    pub const ALL: [Element; 15] = [
        Element::La,
        Element::Ce,
        Element::Pr,
        Element::Nd,
        Element::Pm,
        Element::Sm,
        Element::Eu,
        Element::Gd,
        Element::Tb,
        Element::Dy,
        Element::Ho,
        Element::Er,
        Element::Tm,
        Element::Yb,
        Element::Lu,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn atomic_number(self) -> u32 {
        57 + self as u32
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::La => "La",
            Element::Ce => "Ce",
            Element::Pr => "Pr",
            Element::Nd => "Nd",
            Element::Pm => "Pm",
            Element::Sm => "Sm",
            Element::Eu => "Eu",
            Element::Gd => "Gd",
            Element::Tb => "Tb",
            Element::Dy => "Dy",
            Element::Ho => "Ho",
            Element::Er => "Er",
            Element::Tm => "Tm",
            Element::Yb => "Yb",
            Element::Lu => "Lu",
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Element {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Element::ALL
            .iter()
            .copied()
            .find(|e| e.symbol() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown lanthanide `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Coordination 9.
    Monazite,
    /// Coordination 8.
    Xenotime,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Monazite, Phase::Xenotime];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn coordination(self) -> u32 {
        match self {
            Phase::Monazite => 9,
            Phase::Xenotime => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Monazite => "monazite",
            Phase::Xenotime => "xenotime",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "monazite" => Ok(Phase::Monazite),
            "xenotime" => Ok(Phase::Xenotime),
            other => Err(Error::invalid(format!("unknown phase `{other}`"))),
        }
    }
}

/// The ten tabulated elementals. `name()` is the CSV column header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Property {
    /// Atomic number.
    Z,
    /// Atomic mass (u).
    Mass,
    /// Ionic radius (Å) at the phase's coordination.
    R,
    /// Second ionization potential (eV).
    Ip2,
    /// Third ionization potential (eV).
    Ip3,
    /// Pauling electronegativity.
    Chi,
    /// Young's modulus of LnPO4 (GPa).
    Y,
    /// Effective nuclear charge.
    Zeff,
    /// Macroscopic density (g/cm³).
    Rho,
    /// LnPO4 volume per formula unit (Å³).
    V,
}

impl Property {
    pub const ALL: [Property; 10] = [
        Property::Z,
        Property::Mass,
        Property::R,
        Property::Ip2,
        Property::Ip3,
        Property::Chi,
        Property::Y,
        Property::Zeff,
        Property::Rho,
        Property::V,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Property::Z => "Z",
            Property::Mass => "m",
            Property::R => "R",
            Property::Ip2 => "IP2",
            Property::Ip3 => "IP3",
            Property::Chi => "chi",
            Property::Y => "Y",
            Property::Zeff => "Zeff",
            Property::Rho => "rho",
            Property::V => "V",
        }
    }

    /// Name used inside descriptor labels; mass is spelled out so it cannot
    /// be confused with the mixing ratio `m`.
    pub fn symbol(self) -> &'static str {
        match self {
            Property::Mass => "mass",
            p => p.name(),
        }
    }

    fn must_be_positive(self) -> bool {
        matches!(
            self,
            Property::R | Property::V | Property::Y | Property::Mass
        )
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Property::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownProperty(s.to_string()))
    }
}

impl Serialize for Property {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Property {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const HEADER: [&str; 12] = [
    "element", "phase", "Z", "m", "R", "IP2", "IP3", "chi", "Y", "Zeff", "rho", "V",
];

/// Validated, immutable elemental table.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementalTable {
    values: [[[f64; 10]; 2]; 15],
}

impl ElementalTable {
    /// The table shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_CSV.as_bytes()).expect("bundled elemental table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut col_of = [usize::MAX; 12];
        for (k, name) in HEADER.iter().enumerate() {
            col_of[k] = headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::Schema(format!("missing column: {name}")))?;
        }

        let mut values = [[[f64::NAN; 10]; 2]; 15];
        let mut seen = [[false; 2]; 15];
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec.position().map_or(0, |p| p.line() as usize);
            let field = |k: usize| rec.get(col_of[k]).unwrap_or("");
            let element: Element = field(0).parse().map_err(|e: Error| Error::Parse {
                row,
                msg: e.to_string(),
            })?;
            let phase: Phase = field(1).parse().map_err(|e: Error| Error::Parse {
                row,
                msg: e.to_string(),
            })?;
            if seen[element.index()][phase.index()] {
                return Err(Error::Parse {
                    row,
                    msg: format!("duplicate row for ({element}, {phase})"),
                });
            }
            seen[element.index()][phase.index()] = true;
            for p in Property::ALL {
                let raw = field(2 + p.index());
                let v: f64 = raw.parse().map_err(|_| Error::Parse {
                    row,
                    msg: format!("non-numeric value `{raw}` for {p}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        msg: format!("non-finite value `{raw}` for {p}"),
                    });
                }
                values[element.index()][phase.index()][p.index()] = v;
            }
        }

        for e in Element::ALL {
            for ph in Phase::ALL {
                if !seen[e.index()][ph.index()] {
                    let msg = if seen[e.index()].iter().any(|&s| s) {
                        format!("missing element: {e} ({ph})")
                    } else {
                        format!("missing element: {e}")
                    };
                    return Err(Error::Schema(msg));
                }
            }
        }
        let table = Self { values };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        for ph in Phase::ALL {
            for e in Element::ALL {
                for p in Property::ALL {
                    let v = self.get(e, ph, p);
                    if p.must_be_positive() && !(v > 0.0) {
                        return Err(Error::Schema(format!(
                            "{p} must be positive for ({e}, {ph}), got {v}"
                        )));
                    }
                }
            }
            for w in Element::ALL.windows(2) {
                if !(self.get(w[1], ph, Property::Z) > self.get(w[0], ph, Property::Z)) {
                    return Err(Error::Schema(format!(
                        "atomic number must increase from {} to {} ({ph})",
                        w[0], w[1]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, e: Element, ph: Phase, p: Property) -> f64 {
        self.values[e.index()][ph.index()][p.index()]
    }

    /// Look up a property by its column name (`"Z"`, `"m"`, `"R"`, ...).
    pub fn property(&self, e: Element, ph: Phase, name: &str) -> Result<f64> {
        Ok(self.get(e, ph, name.parse()?))
    }

    /// Replace one value; the result is re-validated.
    pub fn with_value(mut self, e: Element, ph: Phase, p: Property, v: f64) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::invalid(format!("non-finite value for {p}")));
        }
        self.values[e.index()][ph.index()][p.index()] = v;
        self.validate()?;
        Ok(self)
    }

    /// Write the table in the canonical CSV layout (element-major, monazite first).
    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER)?;
        for e in Element::ALL {
            for ph in Phase::ALL {
                let mut rec = vec![e.symbol().to_string(), ph.name().to_string()];
                rec.extend(Property::ALL.iter().map(|&p| format_f64(self.get(e, ph, p))));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal representation.
pub(crate) fn format_f64(v: f64) -> String {
    format!("{v}")
}
