//! Labelled data points, the planted-formula target generator and seeded
//! train/test partitions.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::descriptors::{DescriptorExpr, DescriptorScheme, MixPair};
use crate::elementals::{Element, ElementalTable, Phase, Property};
use crate::error::{Error, Result};
use crate::linalg::ColMatrix;
use crate::rng::SeededRng;

/// 1 GPa·Å³ per formula unit expressed in kJ/mol (Avogadro scaling).
pub const GPA_A3_TO_KJ_PER_MOL: f64 = 0.6022;

pub const DEFAULT_RATIOS: [f64; 5] = [0.25, 0.375, 0.5, 0.625, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Configuration {
    #[serde(rename = "monazite")]
    MonaziteOnly,
    #[serde(rename = "xenotime")]
    XenotimeOnly,
    Fused,
}

impl Configuration {
    pub const ALL: [Configuration; 3] = [
        Configuration::MonaziteOnly,
        Configuration::XenotimeOnly,
        Configuration::Fused,
    ];

    pub fn phases(self) -> &'static [Phase] {
        match self {
            Configuration::MonaziteOnly => &[Phase::Monazite],
            Configuration::XenotimeOnly => &[Phase::Xenotime],
            Configuration::Fused => &Phase::ALL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Configuration::MonaziteOnly => "monazite",
            Configuration::XenotimeOnly => "xenotime",
            Configuration::Fused => "fused",
        }
    }
}

impl std::fmt::Display for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Configuration::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown configuration `{s}`")))
    }
}

/// All C(15,2) unordered element pairs of one phase crossed with `ratios`,
/// pair-major.
pub fn enumerate_pairs(ratios: &[f64], phase: Phase) -> Result<Vec<MixPair>> {
    check_ratios(ratios)?;
    let mut out = Vec::with_capacity(105 * ratios.len());
    for (a, &li) in Element::ALL.iter().enumerate() {
        for &lj in &Element::ALL[a + 1..] {
            for &m in ratios {
                out.push(MixPair::new(li, lj, m, phase)?);
            }
        }
    }
    Ok(out)
}

/// Pairs of every phase in `configuration`, monazite first.
pub fn enumerate_configuration(configuration: Configuration, ratios: &[f64]) -> Result<Vec<MixPair>> {
    let mut out = Vec::new();
    for &ph in configuration.phases() {
        out.extend(enumerate_pairs(ratios, ph)?);
    }
    Ok(out)
}

fn check_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.is_empty() {
        return Err(Error::invalid("mixing ratio list is empty"));
    }
    for (i, &m) in ratios.iter().enumerate() {
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::invalid(format!("mixing ratio {m} outside (0, 1)")));
        }
        if ratios[..i].contains(&m) {
            return Err(Error::invalid(format!("mixing ratio {m} listed twice")));
        }
    }
    Ok(())
}

/// `m(1-m) · mean(Y) / (6 mean(V)) · (Vi - Vj)²`, converted to kJ/mol.
pub fn margules_baseline(table: &ElementalTable, pair: &MixPair) -> f64 {
    let (ph, m) = (pair.phase(), pair.m());
    let y = |e| table.get(e, ph, Property::Y);
    let v = |e| table.get(e, ph, Property::V);
    let y_mean = (y(pair.li()) + y(pair.lj())) / 2.0;
    let v_mean = (v(pair.li()) + v(pair.lj())) / 2.0;
    let dv = v(pair.li()) - v(pair.lj());
    m * (1.0 - m) * y_mean / (6.0 * v_mean) * dv * dv * GPA_A3_TO_KJ_PER_MOL
}

/// One additive term: a `*`-separated product of descriptor labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedTerm {
    pub term: String,
    pub coefficient: f64,
}

impl PlantedTerm {
    pub fn new(term: &str, coefficient: f64) -> Self {
        Self {
            term: term.to_string(),
            coefficient,
        }
    }

    pub fn factors(&self) -> impl Iterator<Item = &str> {
        self.term.split('*').map(str::trim)
    }
}

/// A synthetic target `y = Σ coefficient · term + ε`.
///
/// `noise_sigma` is the absolute noise level; when absent it defaults to
/// `noise_relative · (max y - min y)` of the noiseless targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedModel {
    pub terms: Vec<PlantedTerm>,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    #[serde(default = "default_noise_relative")]
    pub noise_relative: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise_relative() -> f64 {
    0.01
}

impl PlantedModel {
    pub fn new(terms: Vec<PlantedTerm>) -> Self {
        Self {
            terms,
            noise_sigma: None,
            noise_relative: default_noise_relative(),
            seed: 0,
        }
    }

    /// The symmetric Margules estimate written over prior-knowledge labels.
    pub fn margules() -> Self {
        Self::new(vec![PlantedTerm::new(
            "m*(1-m)*mean(Y)*inv(mean(V))*diff(V)^2",
            4.0 * GPA_A3_TO_KJ_PER_MOL / 6.0,
        )])
        .noiseless()
    }

    /// `c1·m(1-m)·diff(V)² + c2·diff(Y)·diff(V)/mean(V)²`.
    pub fn two_term() -> Self {
        Self::new(vec![
            PlantedTerm::new("m*(1-m)*diff(V)^2", 1.1453),
            PlantedTerm::new("diff(Y)*diff(V)*inv(mean(V)^2)", 108.1079),
        ])
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_sigma = Some(0.0);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise_sigma(mut self, sigma: f64) -> Self {
        self.noise_sigma = Some(sigma);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::config("model.terms", "at least one term is required"));
        }
        for t in &self.terms {
            if !t.coefficient.is_finite() {
                return Err(Error::config("model.terms", format!("coefficient of `{}` is not finite", t.term)));
            }
        }
        if let Some(s) = self.noise_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config("model.noise_sigma", "must be finite and >= 0"));
            }
        }
        if !(self.noise_relative >= 0.0 && self.noise_relative.is_finite()) {
            return Err(Error::config("model.noise_relative", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Noiseless targets for `pairs`, with every factor resolved against the
    /// scheme's layout.
    pub fn evaluate(&self, table: &ElementalTable, scheme: &DescriptorScheme, pairs: &[MixPair]) -> Result<Vec<f64>> {
        let layout = scheme.layout();
        let mut resolved: Vec<(f64, Vec<&DescriptorExpr>)> = Vec::new();
        for t in &self.terms {
            let mut exprs = Vec::new();
            for f in t.factors() {
                let d = layout
                    .iter()
                    .find(|d| d.label == f)
                    .ok_or_else(|| Error::UnknownLabel(f.to_string()))?;
                exprs.push(&d.expr);
            }
            resolved.push((t.coefficient, exprs));
        }
        pairs
            .iter()
            .map(|p| {
                let y: f64 = resolved
                    .iter()
                    .map(|(c, exprs)| c * exprs.iter().map(|e| e.eval(table, p)).product::<f64>())
                    .sum();
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::invalid(format!("planted model is not finite at {p}")))
                }
            })
            .collect()
    }

    /// Noise standard deviation that will be applied to `clean` targets.
    pub fn sigma_for(&self, clean: &[f64]) -> f64 {
        self.noise_sigma.unwrap_or_else(|| {
            let lo = clean.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            self.noise_relative * (hi - lo)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub pair: MixPair,
    /// Descriptor values, parallel to [`DataSet::labels`].
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub configuration: Configuration,
    pub scheme: DescriptorScheme,
    pub labels: Vec<String>,
    pub points: Vec<DataPoint>,
    /// Labels dropped from the schema because their value was non-finite for
    /// at least one pair.
    pub dropped: Vec<String>,
}

impl DataSet {
    /// Describe `pairs` with `scheme` and attach targets `ys`. A descriptor
    /// dropped for any one pair is dropped for all, so every point shares one
    /// label list.
    pub fn build(
        table: &ElementalTable,
        scheme: &DescriptorScheme,
        configuration: Configuration,
        pairs: &[MixPair],
        ys: &[f64],
    ) -> Result<Self> {
        scheme.validate()?;
        if pairs.len() != ys.len() {
            return Err(Error::Dimension { expected: pairs.len(), got: ys.len() });
        }
        let layout = scheme.layout();
        let mut dropped = BTreeSet::new();
        let mut rows = Vec::with_capacity(pairs.len());
        for p in pairs {
            let values: Vec<f64> = layout.iter().map(|d| d.expr.eval(table, p)).collect();
            for (d, v) in layout.iter().zip(&values) {
                if !v.is_finite() {
                    dropped.insert(d.label.clone());
                }
            }
            rows.push(values);
        }
        let keep: Vec<usize> = (0..layout.len())
            .filter(|&j| !dropped.contains(&layout[j].label))
            .collect();
        let points = pairs
            .iter()
            .zip(rows)
            .zip(ys)
            .map(|((&pair, row), &y)| {
                if !y.is_finite() {
                    return Err(Error::invalid(format!("target for {pair} is not finite")));
                }
                Ok(DataPoint {
                    pair,
                    x: keep.iter().map(|&j| row[j]).collect(),
                    y,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if !dropped.is_empty() {
            log::warn!("dropped descriptors with non-finite values: {dropped:?}");
        }
        Ok(Self {
            configuration,
            scheme: scheme.clone(),
            labels: keep.iter().map(|&j| layout[j].label.clone()).collect(),
            points,
            dropped: dropped.into_iter().collect(),
        })
    }

    /// Same pairs and targets, described by another scheme.
    pub fn redescribe(&self, table: &ElementalTable, scheme: &DescriptorScheme) -> Result<Self> {
        let pairs: Vec<_> = self.points.iter().map(|p| p.pair).collect();
        Self::build(table, scheme, self.configuration, &pairs, &self.y())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn y(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    pub fn rows(&self) -> Vec<&[f64]> {
        self.points.iter().map(|p| p.x.as_slice()).collect()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Column-major `N × d` descriptor matrix.
    pub fn matrix(&self) -> ColMatrix {
        let n = self.len();
        let d = self.labels.len();
        let mut m = ColMatrix::zeros(n, d);
        for j in 0..d {
            let col = m.col_mut(j);
            for (i, p) in self.points.iter().enumerate() {
                col[i] = p.x[j];
            }
        }
        m
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Self {
        Self {
            configuration: self.configuration,
            scheme: self.scheme.clone(),
            labels: self.labels.clone(),
            points: Vec::new(),
            dropped: self.dropped.clone(),
        }
    }

    /// One row per point: labels, `y`, `pair`, `phase`, `m`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.labels.iter().map(String::as_str).collect();
        header.extend(["y", "pair", "phase", "m"]);
        w.write_record(&header)?;
        for p in &self.points {
            let mut rec: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
            rec.push(p.y.to_string());
            rec.push(p.pair.pair_name());
            rec.push(p.pair.phase().to_string());
            rec.push(p.pair.m().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a dataset CSV. Descriptor values are recomputed from `table` and
    /// `scheme`; the stored values must agree with them to 1e-9 relative.
    pub fn read_csv<R: Read>(reader: R, table: &ElementalTable, scheme: &DescriptorScheme) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("missing column: {name}")))
        };
        let (iy, ipair, iphase, im) = (col("y")?, col("pair")?, col("phase")?, col("m")?);
        let mut pairs = Vec::new();
        let mut ys = Vec::new();
        let mut stored = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = k + 2;
            let perr = |msg: String| Error::Parse { row, msg };
            let num = |i: usize| -> Result<f64> {
                let s = rec.get(i).unwrap_or("");
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| perr(format!("`{s}` in column `{}` is not a finite number", header[i])))
            };
            let pair_s = rec.get(ipair).unwrap_or("");
            let (a, b) = pair_s
                .split_once('-')
                .ok_or_else(|| perr(format!("pair `{pair_s}` is not of the form Li-Lj")))?;
            let li: Element = a.parse().map_err(|e: Error| perr(e.to_string()))?;
            let lj: Element = b.parse().map_err(|e: Error| perr(e.to_string()))?;
            let phase: Phase = rec.get(iphase).unwrap_or("").parse().map_err(|e: Error| perr(e.to_string()))?;
            let pair = MixPair::new(li, lj, num(im)?, phase).map_err(|e| perr(e.to_string()))?;
            pairs.push(pair);
            ys.push(num(iy)?);
            let mut vals = Vec::new();
            for (i, h) in header.iter().enumerate() {
                if i != iy && i != ipair && i != iphase && i != im {
                    vals.push((h.clone(), num(i)?, row));
                }
            }
            stored.push(vals);
        }
        if pairs.is_empty() {
            return Err(Error::Schema("dataset has no rows".into()));
        }
        let phases: BTreeSet<Phase> = pairs.iter().map(|p| p.phase()).collect();
        let configuration = match (phases.contains(&Phase::Monazite), phases.contains(&Phase::Xenotime)) {
            (true, true) => Configuration::Fused,
            (true, false) => Configuration::MonaziteOnly,
            _ => Configuration::XenotimeOnly,
        };
        let ds = Self::build(table, scheme, configuration, &pairs, &ys)?;
        for (point, vals) in ds.points.iter().zip(&stored) {
            for (label, v, row) in vals {
                let j = ds
                    .label_index(label)
                    .ok_or_else(|| Error::UnknownLabel(label.clone()))?;
                let expect = point.x[j];
                if (expect - v).abs() > 1e-9 * expect.abs().max(1e-300) {
                    return Err(Error::Parse {
                        row: *row,
                        msg: format!("`{label}` = {v} disagrees with the elemental table ({expect})"),
                    });
                }
            }
        }
        Ok(ds)
    }
}

/// Planted targets for `configuration`, described by `scheme`. Noise is
/// drawn in point order from a generator seeded with `model.seed`.
pub fn generate_synthetic(
    table: &ElementalTable,
    scheme: &DescriptorScheme,
    model: &PlantedModel,
    configuration: Configuration,
    ratios: &[f64],
) -> Result<DataSet> {
    model.validate()?;
    let pairs = enumerate_configuration(configuration, ratios)?;
    let mut ys = model.evaluate(table, scheme, &pairs)?;
    let sigma = model.sigma_for(&ys);
    if sigma > 0.0 {
        let mut rng = SeededRng::new(model.seed);
        for y in &mut ys {
            *y += sigma * rng.normal();
        }
    }
    DataSet::build(table, scheme, configuration, &pairs, &ys)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Uniform random partition of `0..n`: shuffle, take the first
/// `round(ratio · n)` as training, sort both halves.
pub fn split(n: usize, ratio: f64, seed: u64) -> Result<SplitPlan> {
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} points")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("train fraction {ratio} outside (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut idx);
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan { train, test, seed })
}

/// `k` plans whose test sets are balanced contiguous chunks of one shuffle.
pub fn cv_folds(n: usize, k: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if k > n {
        return Err(Error::invalid(format!("{k} folds requested for {n} points")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut idx);
    let mut plans = Vec::with_capacity(k);
    for f in 0..k {
        let (lo, hi) = (f * n / k, (f + 1) * n / k);
        let mut test = idx[lo..hi].to_vec();
        let mut train: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
        test.sort_unstable();
        train.sort_unstable();
        plans.push(SplitPlan { train, test, seed });
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prior() -> DescriptorScheme {
        DescriptorScheme::prior_knowledge()
    }

    #[test]
    fn pair_counts() {
        assert_eq!(enumerate_pairs(&DEFAULT_RATIOS, Phase::Monazite).unwrap().len(), 525);
        assert_eq!(enumerate_pairs(&[0.5], Phase::Xenotime).unwrap().len(), 105);
        assert_eq!(enumerate_configuration(Configuration::Fused, &DEFAULT_RATIOS).unwrap().len(), 1050);
        assert!(enumerate_pairs(&[], Phase::Monazite).is_err());
        assert!(enumerate_pairs(&[0.5, 0.5], Phase::Monazite).is_err());
        assert!(enumerate_pairs(&[1.0], Phase::Monazite).is_err());
    }

    #[test]
    fn margules_matches_a_direct_evaluation() {
        let t = ElementalTable::bundled();
        let p = MixPair::new(Element::La, Element::Lu, 0.375, Phase::Monazite).unwrap();
        let (yi, yj) = (t.get(Element::La, Phase::Monazite, Property::Y), t.get(Element::Lu, Phase::Monazite, Property::Y));
        let (vi, vj) = (t.get(Element::La, Phase::Monazite, Property::V), t.get(Element::Lu, Phase::Monazite, Property::V));
        let direct = 0.375 * 0.625 * (yi + yj) / 2.0 / (6.0 * (vi + vj) / 2.0) * (vi - vj).powi(2) * 0.6022;
        let got = margules_baseline(&t, &p);
        assert!((got - direct).abs() <= 1e-12 * direct.abs(), "{got} vs {direct}");
        assert!(got > 0.5 && got < 20.0, "{got} kJ/mol");
    }

    #[test]
    fn margules_vanishes_for_equal_volumes() {
        let t = ElementalTable::bundled();
        let v = t.get(Element::La, Phase::Xenotime, Property::V);
        let t = t.with_value(Element::Ce, Phase::Xenotime, Property::V, v).unwrap();
        let p = MixPair::new(Element::La, Element::Ce, 0.5, Phase::Xenotime).unwrap();
        assert_eq!(margules_baseline(&t, &p), 0.0);
    }

    #[test]
    fn planted_margules_agrees_with_the_baseline() {
        let t = ElementalTable::bundled();
        let ds = generate_synthetic(&t, &prior(), &PlantedModel::margules(), Configuration::Fused, &DEFAULT_RATIOS).unwrap();
        assert_eq!(ds.len(), 1050);
        for p in &ds.points {
            let b = margules_baseline(&t, &p.pair);
            assert!((p.y - b).abs() <= 1e-12 * b.abs(), "{} vs {b}", p.y);
        }
    }

    #[test]
    fn unknown_term_names_the_label() {
        let t = ElementalTable::bundled();
        let model = PlantedModel::new(vec![PlantedTerm::new("m*diff(rho)", 1.0)]);
        match generate_synthetic(&t, &prior(), &model, Configuration::MonaziteOnly, &[0.5]) {
            Err(Error::UnknownLabel(l)) => assert_eq!(l, "diff(rho)"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn generator_is_linear_in_the_model() {
        let t = ElementalTable::bundled();
        let a = PlantedModel::new(vec![PlantedTerm::new("m*(1-m)*diff(V)^2", 1.3)]).noiseless();
        let b = PlantedModel::new(vec![PlantedTerm::new("diff(Y)*inv(mean(V))", -0.7)]).noiseless();
        let mut ab = a.clone();
        ab.terms.extend(b.terms.clone());
        let gen = |m: &PlantedModel| generate_synthetic(&t, &prior(), m, Configuration::XenotimeOnly, &DEFAULT_RATIOS).unwrap().y();
        let (ya, yb, yab) = (gen(&a), gen(&b), gen(&ab));
        for i in 0..ya.len() {
            assert!((ya[i] + yb[i] - yab[i]).abs() <= 1e-12 * yab[i].abs().max(1.0));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let t = ElementalTable::bundled();
        let model = PlantedModel::two_term().with_seed(9);
        let bytes = || {
            let ds = generate_synthetic(&t, &prior(), &model, Configuration::MonaziteOnly, &DEFAULT_RATIOS).unwrap();
            let mut buf = Vec::new();
            ds.write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(bytes(), bytes());
        let other = model.clone().with_seed(10);
        let ds = generate_synthetic(&t, &prior(), &other, Configuration::MonaziteOnly, &DEFAULT_RATIOS).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert_ne!(bytes(), buf);
    }

    #[test]
    fn default_noise_is_one_percent_of_the_range() {
        let t = ElementalTable::bundled();
        let model = PlantedModel::two_term().with_seed(1);
        let clean = model.evaluate(&t, &prior(), &enumerate_configuration(Configuration::Fused, &DEFAULT_RATIOS).unwrap()).unwrap();
        let noisy = generate_synthetic(&t, &prior(), &model, Configuration::Fused, &DEFAULT_RATIOS).unwrap().y();
        let sigma = model.sigma_for(&clean);
        let resid: Vec<f64> = noisy.iter().zip(&clean).map(|(a, b)| a - b).collect();
        let sd = crate::linalg::std_dev(&resid);
        assert!((sd / sigma - 1.0).abs() < 0.1, "{sd} vs {sigma}");
    }

    #[test]
    fn csv_round_trip() {
        let t = ElementalTable::bundled();
        let ds = generate_synthetic(&t, &prior(), &PlantedModel::two_term().with_seed(3), Configuration::Fused, &[0.25, 0.5]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = DataSet::read_csv(buf.as_slice(), &t, &prior()).unwrap();
        assert_eq!(back, ds);
        let krr = ds.redescribe(&t, &DescriptorScheme::krr_original()).unwrap();
        assert_eq!(krr.labels.len(), 30);
        assert_eq!(krr.y(), ds.y());
    }

    #[test]
    fn csv_rejects_tampered_descriptors() {
        let t = ElementalTable::bundled();
        let ds = generate_synthetic(&t, &prior(), &PlantedModel::margules(), Configuration::MonaziteOnly, &[0.5]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[3] = format!("999{}", lines[3]);
        let err = DataSet::read_csv(lines.join("\n").as_bytes(), &t, &prior()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 4, .. }), "{err}");
    }

    #[test]
    fn split_sizes() {
        let p = split(525, 0.8, 1).unwrap();
        assert_eq!((p.train.len(), p.test.len()), (420, 105));
        let p = split(1050, 0.5, 1).unwrap();
        assert_eq!((p.train.len(), p.test.len()), (525, 525));
        assert_eq!(split(1050, 0.5, 1).unwrap(), p);
        assert!(split(1, 0.5, 0).is_err());
        assert!(split(10, 1.0, 0).is_err());
    }

    #[test]
    fn fold_sizes() {
        let folds = cv_folds(1050, 5, 2).unwrap();
        assert!(folds.iter().all(|f| f.test.len() == 210 && f.train.len() == 840));
        let folds = cv_folds(2, 2, 0).unwrap();
        assert_eq!(folds[0].test.len(), 1);
        assert_eq!(folds[1].test.len(), 1);
        assert!(cv_folds(3, 4, 0).is_err());
        assert!(cv_folds(3, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..400, r in 0.05f64..0.95, seed in any::<u64>()) {
            let p = split(n, r, seed).unwrap();
            let mut all: Vec<usize> = p.train.iter().chain(&p.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let want = ((r * n as f64).round() as usize).clamp(1, n - 1);
            prop_assert_eq!(p.train.len(), want);
        }

        #[test]
        fn folds_partition_the_index_set(n in 2usize..300, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = cv_folds(n, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.iter().copied()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for f in &folds {
                prop_assert_eq!(f.train.len() + f.test.len(), n);
                prop_assert!(f.train.iter().all(|i| f.test.binary_search(i).is_err()));
            }
        }

        #[test]
        fn margules_is_symmetric(a in 0usize..15, b in 0usize..15, k in 1u32..8) {
            prop_assume!(a != b);
            let t = ElementalTable::bundled();
            let m = k as f64 / 8.0;
            let p = MixPair::new(Element::ALL[a], Element::ALL[b], m, Phase::Monazite).unwrap();
            let q = MixPair::new(Element::ALL[b], Element::ALL[a], 1.0 - m, Phase::Monazite).unwrap();
            prop_assert_eq!(margules_baseline(&t, &p), margules_baseline(&t, &q));
        }
    }
}
