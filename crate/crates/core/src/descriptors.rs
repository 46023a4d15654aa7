//! Descriptor vectors built from a pair of lanthanides and their mixing ratio.
//!
//! Two families are supported:
//!
//! * [`SchemeFamily::KrrOriginal`]: for every elemental the triple
//!   weighted mean `x1`, quadratically weighted mean `x2` and absolute
//!   difference `x3`.
//! * [`SchemeFamily::PriorKnowledge`]: arithmetic mean `mean(P)` and half
//!   absolute difference `diff(P)` per elemental, their reciprocals, the
//!   mixing ratio as standalone descriptors (`m`, `(1-m)` and powers) and
//!   higher powers of the volume and radius descriptors.
//!
//! Every descriptor carries a [`DescriptorExpr`] recording how it was built,
//! so a label can always be re-evaluated against the elemental table.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::elementals::{Element, ElementalTable, Phase, Property};
use crate::error::{Error, Result};

/// A binary solid solution `m Li + (1-m) Lj` in one phase, canonically
/// oriented so that `li` precedes `lj` in element order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixPair {
    li: Element,
    lj: Element,
    m: f64,
    phase: Phase,
}

impl MixPair {
    /// Normalizes `(li, lj, m)` to `(lj, li, 1 - m)` when `lj` precedes `li`.
    pub fn new(li: Element, lj: Element, m: f64, phase: Phase) -> Result<Self> {
        if li == lj {
            return Err(Error::invalid(format!("pair needs two distinct elements, got {li} twice")));
        }
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::invalid(format!("mixing ratio must lie in (0, 1), got {m}")));
        }
        Ok(if li < lj {
            Self { li, lj, m, phase }
        } else {
            Self { li: lj, lj: li, m: 1.0 - m, phase }
        })
    }

    pub fn li(&self) -> Element {
        self.li
    }

    pub fn lj(&self) -> Element {
        self.lj
    }

    /// Fraction of `li`.
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// `"La-Ce"`.
    pub fn pair_name(&self) -> String {
        format!("{}-{}", self.li, self.lj)
    }

    fn endpoints(&self, table: &ElementalTable, p: Property) -> (f64, f64) {
        (
            table.get(self.li, self.phase, p),
            table.get(self.lj, self.phase, p),
        )
    }
}

impl fmt::Display for MixPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) {} m={}", self.pair_name(), self.phase, self.li, self.m)
    }
}

/// `m ei + (1-m) ej`.
pub fn weighted_mean(ei: f64, ej: f64, m: f64) -> f64 {
    debug_assert!(m > 0.0 && m < 1.0);
    // written around ej so that equal endmembers return exactly ej
    ej + m * (ei - ej)
}

/// `(m² ei + (1-m)² ej) / (m² + (1-m)²)`.
pub fn quad_weighted_mean(ei: f64, ej: f64, m: f64) -> f64 {
    debug_assert!(m > 0.0 && m < 1.0);
    let a = m * m;
    let b = (1.0 - m) * (1.0 - m);
    ej + a / (a + b) * (ei - ej)
}

/// `|ei - ej|`.
pub fn abs_difference(ei: f64, ej: f64) -> f64 {
    (ei - ej).abs()
}

/// `|ei + ej| / 2`.
pub fn arithmetic_mean(ei: f64, ej: f64) -> f64 {
    (ei + ej).abs() / 2.0
}

/// `|ei - ej| / 2`.
pub fn half_difference(ei: f64, ej: f64) -> f64 {
    (ei - ej).abs() / 2.0
}

/// How a descriptor value is computed from the table and the pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DescriptorExpr {
    WeightedMean(Property),
    QuadWeightedMean(Property),
    AbsDifference(Property),
    Mean(Property),
    HalfDifference(Property),
    /// The mixing ratio `m`.
    Ratio,
    /// `1 - m`.
    Complement,
    Pow(Box<DescriptorExpr>, i32),
    Inv(Box<DescriptorExpr>),
}

impl DescriptorExpr {
    pub fn eval(&self, table: &ElementalTable, pair: &MixPair) -> f64 {
        use DescriptorExpr::*;
        match self {
            WeightedMean(p) => {
                let (a, b) = pair.endpoints(table, *p);
                weighted_mean(a, b, pair.m)
            }
            QuadWeightedMean(p) => {
                let (a, b) = pair.endpoints(table, *p);
                quad_weighted_mean(a, b, pair.m)
            }
            AbsDifference(p) => {
                let (a, b) = pair.endpoints(table, *p);
                abs_difference(a, b)
            }
            Mean(p) => {
                let (a, b) = pair.endpoints(table, *p);
                arithmetic_mean(a, b)
            }
            HalfDifference(p) => {
                let (a, b) = pair.endpoints(table, *p);
                half_difference(a, b)
            }
            Ratio => pair.m,
            Complement => 1.0 - pair.m,
            Pow(inner, k) => inner.eval(table, pair).powi(*k),
            Inv(inner) => 1.0 / inner.eval(table, pair),
        }
    }

    pub fn label(&self) -> String {
        use DescriptorExpr::*;
        match self {
            WeightedMean(p) => format!("x1({})", p.symbol()),
            QuadWeightedMean(p) => format!("x2({})", p.symbol()),
            AbsDifference(p) => format!("x3({})", p.symbol()),
            Mean(p) => format!("mean({})", p.symbol()),
            HalfDifference(p) => format!("diff({})", p.symbol()),
            Ratio => "m".to_string(),
            Complement => "(1-m)".to_string(),
            Pow(inner, k) => format!("{}^{k}", inner.label()),
            Inv(inner) => {
                let l = inner.label();
                match l.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
                    Some(bare) if !bare.contains('(') => format!("inv({bare})"),
                    _ => format!("inv({l})"),
                }
            }
        }
    }

    /// True for descriptors that vanish when both endmembers are identical.
    pub fn is_difference(&self) -> bool {
        use DescriptorExpr::*;
        match self {
            AbsDifference(_) | HalfDifference(_) => true,
            Pow(inner, _) => inner.is_difference(),
            _ => false,
        }
    }

    fn pow(self, k: u32) -> Self {
        if k == 1 {
            self
        } else {
            DescriptorExpr::Pow(Box::new(self), k as i32)
        }
    }

    fn inv(self) -> Self {
        DescriptorExpr::Inv(Box::new(self))
    }
}

/// A labelled descriptor in a scheme's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub label: String,
    pub expr: DescriptorExpr,
}

impl Descriptor {
    fn new(expr: DescriptorExpr) -> Self {
        Self {
            label: expr.label(),
            expr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorVector {
    pub values: Vec<f64>,
    pub labels: Vec<String>,
}

impl DescriptorVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeFamily {
    KrrOriginal,
    PriorKnowledge,
}

/// Which descriptors to build. The `PriorKnowledge` default produces 58
/// descriptors on the bundled table:
///
/// | group | count |
/// |---|---|
/// | `mean(P)`, `diff(P)` for 9 elementals (all but `rho`) | 18 |
/// | reciprocals of those, except for `chi` | 16 |
/// | `m^p`, `(1-m)^p` for p in {1, 2}, plus reciprocals | 8 |
/// | `diff(V)^p`, `mean(V)^p` for p in {2, 3}, plus reciprocals | 8 |
/// | `diff(R)^p`, `mean(R)^p` for p in {2, 3}, plus reciprocals | 8 |
///
/// Pauling electronegativity is tabulated to two decimals and ties between
/// neighbours (Eu/Gd/Tb) make `diff(chi)` vanish, so its reciprocal is left
/// out rather than dropped pair by pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptorScheme {
    pub family: SchemeFamily,
    pub properties: Vec<Property>,
    #[serde(default)]
    pub include_inverses: bool,
    #[serde(default)]
    pub inverse_exclude: Vec<Property>,
    #[serde(default)]
    pub m_powers: Vec<u32>,
    #[serde(default)]
    pub v_powers: Vec<u32>,
    #[serde(default)]
    pub r_powers: Vec<u32>,
}

impl DescriptorScheme {
    /// All ten elementals, three descriptors each.
    pub fn krr_original() -> Self {
        Self::krr_with(Property::ALL.to_vec())
    }

    pub fn krr_with(properties: Vec<Property>) -> Self {
        Self {
            family: SchemeFamily::KrrOriginal,
            properties,
            include_inverses: false,
            inverse_exclude: Vec::new(),
            m_powers: Vec::new(),
            v_powers: Vec::new(),
            r_powers: Vec::new(),
        }
    }

    pub fn prior_knowledge() -> Self {
        use Property::*;
        Self {
            family: SchemeFamily::PriorKnowledge,
            properties: vec![Z, Mass, R, Ip2, Ip3, Chi, Y, Zeff, V],
            include_inverses: true,
            inverse_exclude: vec![Chi],
            m_powers: vec![1, 2],
            v_powers: vec![2, 3],
            r_powers: vec![2, 3],
        }
    }

    /// Same composition restricted to the given elementals.
    pub fn with_properties(mut self, properties: Vec<Property>) -> Self {
        self.properties = properties;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.properties.is_empty() {
            return Err(Error::config("scheme.properties", "must not be empty"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.properties {
            if !seen.insert(*p) {
                return Err(Error::config("scheme.properties", format!("duplicate `{p}`")));
            }
        }
        if self.family == SchemeFamily::PriorKnowledge {
            for (field, powers, min) in [
                ("scheme.m_powers", &self.m_powers, 1),
                ("scheme.v_powers", &self.v_powers, 2),
                ("scheme.r_powers", &self.r_powers, 2),
            ] {
                let mut s = std::collections::BTreeSet::new();
                for &p in powers {
                    if p < min || p > 12 {
                        return Err(Error::config(field, format!("power {p} outside [{min}, 12]")));
                    }
                    if !s.insert(p) {
                        return Err(Error::config(field, format!("duplicate power {p}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// The full ordered list of candidate descriptors, before any
    /// pair-dependent drops.
    pub fn layout(&self) -> Vec<Descriptor> {
        use DescriptorExpr::*;
        let mut out = Vec::new();
        match self.family {
            SchemeFamily::KrrOriginal => {
                for &p in &self.properties {
                    out.push(Descriptor::new(WeightedMean(p)));
                    out.push(Descriptor::new(QuadWeightedMean(p)));
                    out.push(Descriptor::new(AbsDifference(p)));
                }
            }
            SchemeFamily::PriorKnowledge => {
                for &p in &self.properties {
                    out.push(Descriptor::new(Mean(p)));
                    out.push(Descriptor::new(HalfDifference(p)));
                }
                if self.include_inverses {
                    for &p in &self.properties {
                        if !self.inverse_exclude.contains(&p) {
                            out.push(Descriptor::new(Mean(p).inv()));
                            out.push(Descriptor::new(HalfDifference(p).inv()));
                        }
                    }
                }
                let mut mix = Vec::new();
                for &k in &self.m_powers {
                    mix.push(Ratio.pow(k));
                    mix.push(Complement.pow(k));
                }
                self.push_with_inverses(&mut out, mix);
                for (prop, powers) in [(Property::V, &self.v_powers), (Property::R, &self.r_powers)] {
                    if !self.properties.contains(&prop) {
                        continue;
                    }
                    let mut terms = Vec::new();
                    for &k in powers {
                        terms.push(HalfDifference(prop).pow(k));
                        terms.push(Mean(prop).pow(k));
                    }
                    self.push_with_inverses(&mut out, terms);
                }
            }
        }
        out
    }

    fn push_with_inverses(&self, out: &mut Vec<Descriptor>, terms: Vec<DescriptorExpr>) {
        let inverses: Vec<_> = if self.include_inverses {
            terms.iter().cloned().map(DescriptorExpr::inv).collect()
        } else {
            Vec::new()
        };
        out.extend(terms.into_iter().map(Descriptor::new));
        out.extend(inverses.into_iter().map(Descriptor::new));
    }

    /// Build the descriptor vector for one pair. Reciprocals of descriptors
    /// that are exactly zero for this pair are dropped and their labels
    /// returned as the second element.
    pub fn build(&self, table: &ElementalTable, pair: &MixPair) -> (DescriptorVector, Vec<String>) {
        let mut v = DescriptorVector::default();
        let mut dropped = Vec::new();
        for d in self.layout() {
            let value = d.expr.eval(table, pair);
            if value.is_finite() {
                v.values.push(value);
                v.labels.push(d.label);
            } else {
                dropped.push(d.label);
            }
        }
        (v, dropped)
    }
}

/// The weighted-mean/quadratic-mean/difference triple for every property in `subset`.
pub fn build_krr_descriptors(
    table: &ElementalTable,
    pair: &MixPair,
    subset: &[Property],
) -> Result<DescriptorVector> {
    if subset.is_empty() {
        return Err(Error::invalid("descriptor subset must not be empty"));
    }
    Ok(DescriptorScheme::krr_with(subset.to_vec()).build(table, pair).0)
}

/// Knowledge-constrained descriptors for one pair, with the labels of any
/// reciprocal that was dropped because its base descriptor is exactly zero.
pub fn build_prior_descriptors(
    table: &ElementalTable,
    pair: &MixPair,
    scheme: &DescriptorScheme,
) -> Result<(DescriptorVector, Vec<String>)> {
    if scheme.family != SchemeFamily::PriorKnowledge {
        return Err(Error::invalid("build_prior_descriptors needs a PriorKnowledge scheme"));
    }
    scheme.validate()?;
    Ok(scheme.build(table, pair))
}
