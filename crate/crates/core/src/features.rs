//! Candidate-function space: all multiset products of base descriptors up to
//! a given degree.
//!
//! Columns are emitted in graded lexicographic order: every single base
//! column, then every pair `i <= j`, then every triple `i <= j <= k`.
//! Constant columns (including products such as `m*inv(m)`, which are 1 up
//! to rounding) and columns with non-finite entries are removed and logged.
//!
//! # Cache layout
//!
//! [`write_cache`] stores an expansion little-endian as
//!
//! ```text
//! "HEFM"  u32 version  u64 N  u64 M  u64 d  u32 max_degree
//! u32 tiers, then u64 pre-prune count per tier
//! u64 pruned count, then per entry: u32 len + UTF-8 label, u32 len + UTF-8 reason
//! M entries: u32 len + UTF-8 label, u32 degree, degree × u32 base index
//! M × N f64 column data (column-major), then M mean, then M std
//! ```

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{mean, std_dev, ColMatrix};

/// Relative spread below which a column is treated as constant.
pub const ZERO_VARIANCE_TOL: f64 = 1e-12;

const MAGIC: &[u8; 4] = b"HEFM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PrunedColumn {
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: ColMatrix,
    pub labels: Vec<String>,
    /// Sorted base-column indices whose product forms each column.
    pub terms: Vec<Vec<usize>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub pruned: Vec<PrunedColumn>,
    /// Number of candidates per degree before pruning.
    pub tier_counts: Vec<usize>,
    pub base_labels: Vec<String>,
    pub base: ColMatrix,
}

/// Per-column `(mean, std)` used to standardize a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// All multisets of `0..d` with sizes `1..=max_degree`, graded lexicographic.
pub fn multisets(d: usize, max_degree: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(i, d, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for k in 1..=max_degree {
        rec(0, d, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// `C(d + k - 1, k)`.
pub fn tier_size(d: usize, k: usize) -> usize {
    let mut c: u128 = 1;
    for i in 0..k as u128 {
        c = c * (d as u128 + i) / (i + 1);
    }
    c as usize
}

pub fn term_label(base_labels: &[String], term: &[usize]) -> String {
    term.iter().map(|&i| base_labels[i].as_str()).collect::<Vec<_>>().join("*")
}

fn product_into(base: &ColMatrix, term: &[usize], out: &mut [f64]) {
    out.copy_from_slice(base.col(term[0]));
    for &j in &term[1..] {
        out.iter_mut().zip(base.col(j)).for_each(|(o, b)| *o *= b);
    }
}

fn prune_reason(col: &[f64]) -> Option<String> {
    if col.iter().any(|v| !v.is_finite()) {
        return Some("non-finite value".into());
    }
    let m = mean(col);
    let s = std_dev(col);
    if s == 0.0 || s <= ZERO_VARIANCE_TOL * m.abs() {
        return Some(format!("zero variance (mean {m}, std {s:e})"));
    }
    None
}

/// Element-wise products of all base multisets of size `1..=max_degree`.
pub fn expand(base: &ColMatrix, base_labels: &[String], max_degree: usize) -> Result<FeatureMatrix> {
    let (n, d) = (base.nrows(), base.ncols());
    if d == 0 {
        return Err(Error::invalid("expansion needs at least one base descriptor"));
    }
    if n < 2 {
        return Err(Error::invalid("expansion needs at least two rows"));
    }
    if base_labels.len() != d {
        return Err(Error::Dimension { expected: d, got: base_labels.len() });
    }
    if !(1..=3).contains(&max_degree) {
        return Err(Error::invalid(format!("max_degree must be 1, 2 or 3, got {max_degree}")));
    }
    let mut seen = BTreeSet::new();
    for l in base_labels {
        if !seen.insert(l) {
            return Err(Error::invalid(format!("duplicate base label `{l}`")));
        }
    }

    let candidates = multisets(d, max_degree);
    let tier_counts = (1..=max_degree)
        .map(|k| candidates.iter().filter(|t| t.len() == k).count())
        .collect();
    let mut data = vec![0.0; n * candidates.len()];
    let reasons: Vec<Option<String>> = data
        .par_chunks_mut(n)
        .zip(candidates.par_iter())
        .map(|(col, term)| {
            product_into(base, term, col);
            prune_reason(col)
        })
        .collect();

    let mut kept = 0;
    let mut terms = Vec::new();
    let mut labels = Vec::new();
    let mut pruned = Vec::new();
    for (c, (term, reason)) in candidates.into_iter().zip(reasons).enumerate() {
        let label = term_label(base_labels, &term);
        match reason {
            Some(reason) => {
                log::info!("pruned `{label}`: {reason}");
                pruned.push(PrunedColumn { label, reason });
            }
            None => {
                if kept != c {
                    data.copy_within(c * n..(c + 1) * n, kept * n);
                }
                kept += 1;
                terms.push(term);
                labels.push(label);
            }
        }
    }
    data.truncate(kept * n);
    data.shrink_to_fit();
    let columns = ColMatrix::from_raw(n, kept, data);
    let (mean, std) = (0..kept).map(|j| (mean(columns.col(j)), std_dev(columns.col(j)))).unzip();
    Ok(FeatureMatrix {
        columns,
        labels,
        terms,
        mean,
        std,
        pruned,
        tier_counts,
        base_labels: base_labels.to_vec(),
        base: base.clone(),
    })
}

impl FeatureMatrix {
    pub fn nrows(&self) -> usize {
        self.columns.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.columns.ncols()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Number of kept columns of each degree.
    pub fn kept_per_tier(&self) -> Vec<usize> {
        (1..=self.tier_counts.len())
            .map(|k| self.terms.iter().filter(|t| t.len() == k).count())
            .collect()
    }

    /// Column `j` recomputed from the base matrix, independent of any
    /// standardization applied since expansion.
    pub fn raw_column(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows()];
        product_into(&self.base, &self.terms[j], &mut out);
        out
    }
}

/// Center every column and scale it to unit population standard deviation.
pub fn standardize(mut fm: FeatureMatrix) -> (FeatureMatrix, Transform) {
    let n = fm.nrows();
    let m = fm.ncols();
    let mut data = std::mem::replace(&mut fm.columns, ColMatrix::zeros(0, 0)).into_raw();
    let stats: Vec<(f64, f64)> = data
        .par_chunks_mut(n.max(1))
        .map(|col| {
            let mu = mean(col);
            let sd = std_dev(col);
            col.iter_mut().for_each(|v| *v = (*v - mu) / sd);
            (mu, sd)
        })
        .collect();
    fm.columns = ColMatrix::from_raw(n, m, data);
    let (mean_, std_): (Vec<f64>, Vec<f64>) = stats.into_iter().unzip();
    fm.mean = vec![0.0; m];
    fm.std = vec![1.0; m];
    (fm, Transform { mean: mean_, std: std_ })
}

/// Map coefficients fitted on standardized columns back to raw scale:
/// `γ_raw = γ / s`, `b_raw = b - Σ γ_j μ_j / s_j`.
pub fn unstandardize_coeffs(gamma_std: &[f64], intercept_std: f64, t: &Transform) -> Result<(Vec<f64>, f64)> {
    if gamma_std.len() != t.std.len() || t.mean.len() != t.std.len() {
        return Err(Error::Dimension { expected: t.std.len(), got: gamma_std.len() });
    }
    let raw: Vec<f64> = gamma_std.iter().zip(&t.std).map(|(g, s)| g / s).collect();
    let shift: f64 = raw.iter().zip(&t.mean).map(|(g, m)| g * m).sum();
    Ok((raw, intercept_std - shift))
}

impl Transform {
    pub fn identity(m: usize) -> Self {
        Self { mean: vec![0.0; m], std: vec![1.0; m] }
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            mean: idx.iter().map(|&j| self.mean[j]).collect(),
            std: idx.iter().map(|&j| self.std[j]).collect(),
        }
    }
}

/// Content hash of (base matrix, base labels, scheme tag, degree).
pub fn cache_key(base: &ColMatrix, base_labels: &[String], scheme_tag: &str, max_degree: usize) -> String {
    let mut h = Sha256::new();
    h.update((base.nrows() as u64).to_le_bytes());
    h.update((base.ncols() as u64).to_le_bytes());
    for v in base.as_slice() {
        h.update(v.to_le_bytes());
    }
    for l in base_labels {
        h.update((l.len() as u32).to_le_bytes());
        h.update(l.as_bytes());
    }
    h.update(scheme_tag.as_bytes());
    h.update((max_degree as u32).to_le_bytes());
    hex::encode(h.finalize())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub fn write_cache<W: Write>(fm: &FeatureMatrix, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [fm.nrows(), fm.ncols(), fm.base.ncols()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&(fm.tier_counts.len() as u32).to_le_bytes())?;
    w.write_all(&(fm.tier_counts.len() as u32).to_le_bytes())?;
    for &c in &fm.tier_counts {
        w.write_all(&(c as u64).to_le_bytes())?;
    }
    w.write_all(&(fm.pruned.len() as u64).to_le_bytes())?;
    for p in &fm.pruned {
        put_str(&mut w, &p.label)?;
        put_str(&mut w, &p.reason)?;
    }
    for (label, term) in fm.labels.iter().zip(&fm.terms) {
        put_str(&mut w, label)?;
        w.write_all(&(term.len() as u32).to_le_bytes())?;
        for &i in term {
            w.write_all(&(i as u32).to_le_bytes())?;
        }
    }
    for v in fm.columns.as_slice().iter().chain(&fm.mean).chain(&fm.std) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<R> {
    r: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut b = [0u8; K];
        self.r
            .read_exact(&mut b)
            .map_err(|e| Error::Cache(format!("truncated cache: {e}")))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }
    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.bytes()?) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn string(&mut self) -> Result<String> {
        let len = self.u32()?;
        let mut b = vec![0u8; len];
        self.r
            .read_exact(&mut b)
            .map_err(|e| Error::Cache(format!("truncated cache: {e}")))?;
        String::from_utf8(b).map_err(|e| Error::Cache(format!("label is not UTF-8: {e}")))
    }
}

/// Read an expansion written by [`write_cache`]; `base` and `base_labels`
/// must be the inputs it was computed from.
pub fn read_cache<R: Read>(r: R, base: &ColMatrix, base_labels: &[String]) -> Result<FeatureMatrix> {
    let mut c = Cursor { r };
    if &c.bytes::<4>()? != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = c.u32()?;
    if version as u32 != VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let (n, m, d) = (c.u64()?, c.u64()?, c.u64()?);
    if n != base.nrows() || d != base.ncols() || d != base_labels.len() {
        return Err(Error::Cache("cache does not match the base matrix".into()));
    }
    let max_degree = c.u32()?;
    let tiers = c.u32()?;
    if tiers != max_degree || tiers > 3 {
        return Err(Error::Cache(format!("bad tier count {tiers}")));
    }
    let tier_counts = (0..tiers).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
    let npruned = c.u64()?;
    let mut pruned = Vec::with_capacity(npruned.min(1 << 20));
    for _ in 0..npruned {
        pruned.push(PrunedColumn { label: c.string()?, reason: c.string()? });
    }
    let mut labels = Vec::with_capacity(m);
    let mut terms = Vec::with_capacity(m);
    for _ in 0..m {
        let label = c.string()?;
        let k = c.u32()?;
        if k == 0 || k > tiers {
            return Err(Error::Cache(format!("bad degree {k} for `{label}`")));
        }
        let term = (0..k).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        if term.iter().any(|&i| i >= d) || term_label(base_labels, &term) != label {
            return Err(Error::Cache(format!("term of `{label}` does not match the base labels")));
        }
        labels.push(label);
        terms.push(term);
    }
    let mut data = Vec::with_capacity(n * m);
    for _ in 0..n * m {
        data.push(c.f64()?);
    }
    let mean = (0..m).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let std = (0..m).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix {
        columns: ColMatrix::from_raw(n, m, data),
        labels,
        terms,
        mean,
        std,
        pruned,
        tier_counts,
        base_labels: base_labels.to_vec(),
        base: base.clone(),
    })
}

/// [`expand`], reusing `<dir>/<key>.hefm` when present.
pub fn expand_cached(
    base: &ColMatrix,
    base_labels: &[String],
    max_degree: usize,
    scheme_tag: &str,
    dir: &Path,
) -> Result<(FeatureMatrix, PathBuf)> {
    let path = dir.join(format!("{}.hefm", cache_key(base, base_labels, scheme_tag, max_degree)));
    if path.exists() {
        let f = std::fs::File::open(&path)?;
        match read_cache(std::io::BufReader::new(f), base, base_labels) {
            Ok(fm) => return Ok((fm, path)),
            Err(e) => log::warn!("ignoring unreadable cache {}: {e}", path.display()),
        }
    }
    let fm = expand(base, base_labels, max_degree)?;
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    write_cache(&fm, std::io::BufWriter::new(std::fs::File::create(&tmp)?))?;
    std::fs::rename(&tmp, &path)?;
    Ok((fm, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn random_base(seed: u64, n: usize, d: usize) -> (ColMatrix, Vec<String>) {
        let mut r = SeededRng::new(seed);
        let cols: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| r.normal() + 2.0).collect()).collect();
        let labels = (0..d).map(|j| format!("b{j}")).collect();
        (ColMatrix::from_columns(n, &cols).unwrap(), labels)
    }

    #[test]
    fn small_expansion_counts_and_order() {
        let (b, l) = random_base(1, 6, 3);
        let fm = expand(&b, &l, 3).unwrap();
        assert_eq!(fm.ncols(), 19);
        assert_eq!(fm.tier_counts, vec![3, 6, 10]);
        assert_eq!(&fm.labels[..5], &["b0", "b1", "b2", "b0*b0", "b0*b1"]);
        assert_eq!(fm.labels[9], "b0*b0*b0");
        assert_eq!(fm.labels[18], "b2*b2*b2");
    }

    #[test]
    fn tier_sizes_follow_stars_and_bars() {
        for d in 1..=12 {
            let all = multisets(d, 3);
            for k in 1..=3 {
                assert_eq!(all.iter().filter(|t| t.len() == k).count(), tier_size(d, k), "d={d} k={k}");
            }
            let set: BTreeSet<_> = all.iter().collect();
            assert_eq!(set.len(), all.len());
        }
        for d in 3..=30 {
            assert_eq!(tier_size(d, 2), d * (d + 1) / 2);
            assert_eq!(tier_size(d, 3), d * (d + 1) * (d + 2) / 6);
        }
        assert_eq!(tier_size(27, 2), 378);
        assert_eq!(tier_size(27, 3), 3654);
    }

    #[test]
    fn reciprocal_products_are_pruned() {
        let mut r = SeededRng::new(2);
        let m: Vec<f64> = (0..40).map(|_| 0.1 + 0.8 * r.uniform()).collect();
        let inv: Vec<f64> = m.iter().map(|v| 1.0 / v).collect();
        let x: Vec<f64> = (0..40).map(|_| r.normal()).collect();
        let b = ColMatrix::from_columns(40, &[m, inv, x]).unwrap();
        let labels: Vec<String> = ["m", "inv(m)", "x"].iter().map(|s| s.to_string()).collect();
        let fm = expand(&b, &labels, 2).unwrap();
        let pruned: Vec<_> = fm.pruned.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(pruned, vec!["m*inv(m)"]);
        assert_eq!(fm.ncols(), 8);
        assert_eq!(fm.kept_per_tier(), vec![3, 5]);
    }

    #[test]
    fn non_finite_products_are_pruned() {
        let b = ColMatrix::from_columns(3, &[vec![1e200, 2e200, 3e200], vec![1.0, 2.0, 4.0]]).unwrap();
        let fm = expand(&b, &["a".into(), "b".into()], 2).unwrap();
        assert_eq!(fm.pruned.len(), 1);
        assert_eq!(fm.pruned[0].label, "a*a");
        assert!(fm.pruned[0].reason.contains("non-finite"));
    }

    #[test]
    fn expansion_input_checks() {
        let (b, l) = random_base(3, 5, 2);
        assert!(expand(&b, &l, 4).is_err());
        assert!(expand(&b, &l[..1], 2).is_err());
        assert!(expand(&b, &["x".into(), "x".into()], 2).is_err());
        let one = ColMatrix::from_columns(1, &[vec![1.0]]).unwrap();
        assert!(expand(&one, &["x".into()], 2).is_err());
    }

    #[test]
    fn standardized_columns_have_unit_moments() {
        let (b, l) = random_base(4, 50, 4);
        let (fm, t) = standardize(expand(&b, &l, 3).unwrap());
        for j in 0..fm.ncols() {
            let c = fm.columns.col(j);
            assert!(mean(c).abs() <= 1e-12);
            assert!((std_dev(c) - 1.0).abs() <= 1e-12);
        }
        assert_eq!(t.mean.len(), fm.ncols());
        let (again, t2) = standardize(fm.clone());
        for (a, b) in again.columns.as_slice().iter().zip(fm.columns.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(t2.std.iter().all(|s| (s - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn shifted_column_standardizes_identically() {
        let (b, l) = random_base(5, 30, 1);
        let shifted = ColMatrix::from_columns(30, &[b.col(0).iter().map(|v| v + 7.0).collect()]).unwrap();
        let (a, _) = standardize(expand(&b, &l, 1).unwrap());
        let (c, _) = standardize(expand(&shifted, &l, 1).unwrap());
        for (x, y) in a.columns.as_slice().iter().zip(c.columns.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn unstandardized_coefficients_predict_identically() {
        let (b, l) = random_base(6, 20, 3);
        let fm = expand(&b, &l, 2).unwrap();
        let raw = fm.clone();
        let (std_fm, t) = standardize(fm);
        let mut r = SeededRng::new(7);
        let g: Vec<f64> = (0..std_fm.ncols()).map(|_| r.normal()).collect();
        let (graw, braw) = unstandardize_coeffs(&g, 0.3, &t).unwrap();
        let p_std = std_fm.columns.mul_vec(&g);
        let p_raw = raw.columns.mul_vec(&graw);
        for (a, b) in p_std.iter().zip(&p_raw) {
            let (a, b) = (a + 0.3, b + braw);
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
        }
        let (same, b0) = unstandardize_coeffs(&[1.5, -2.0], 0.7, &Transform::identity(2)).unwrap();
        assert_eq!((same, b0), (vec![1.5, -2.0], 0.7));
        let (scaled, _) = unstandardize_coeffs(&[3.0], 0.0, &Transform { mean: vec![0.0], std: vec![2.0] }).unwrap();
        assert_eq!(scaled, vec![1.5]);
        assert!(unstandardize_coeffs(&[1.0], 0.0, &t).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let (b, l) = random_base(8, 10, 3);
        let fm = expand(&b, &l, 3).unwrap();
        let mut buf = Vec::new();
        write_cache(&fm, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"HEFM");
        assert_eq!(read_cache(buf.as_slice(), &b, &l).unwrap(), fm);
        assert!(read_cache(&buf[..buf.len() - 3], &b, &l).is_err());
        let (other, _) = random_base(8, 11, 3);
        assert!(read_cache(buf.as_slice(), &other, &l).is_err());

        let dir = tempfile::tempdir().unwrap();
        let (a, p1) = expand_cached(&b, &l, 3, "s", dir.path()).unwrap();
        let (c, p2) = expand_cached(&b, &l, 3, "s", dir.path()).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(a, c);
        assert_ne!(cache_key(&b, &l, "s", 3), cache_key(&b, &l, "s", 2));
    }

    proptest! {
        #[test]
        fn columns_are_products_of_their_factors(seed in any::<u64>(), d in 1usize..6, deg in 1usize..4) {
            let (b, l) = random_base(seed, 8, d);
            let fm = expand(&b, &l, deg).unwrap();
            let mut r = SeededRng::new(seed ^ 1);
            for j in 0..fm.ncols() {
                let i = r.below(8);
                let want: f64 = fm.terms[j].iter().map(|&k| b.get(i, k)).product();
                prop_assert_eq!(fm.columns.get(i, j), want);
                prop_assert_eq!(&fm.labels[j], &term_label(&l, &fm.terms[j]));
            }
        }
    }
}
