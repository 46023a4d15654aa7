//! Kernel ridge regression: `α = (K + λI)⁻¹ y`, prediction, error metrics,
//! log-grid hyperparameter search and k-fold cross-validation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{cv_folds, SplitPlan};
use crate::error::{Error, Result};
use crate::kernels::{cross_gram, gram, KernelFamily, KernelSpec};
use crate::linalg::{cholesky_in_place, cholesky_solve};

/// Per-feature `(x - mean) / std`, fitted on training inputs. Constant
/// features keep a unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit<X: AsRef<[f64]>>(xs: &[X]) -> Self {
        let d = xs.first().map_or(0, |x| x.as_ref().len());
        let n = xs.len() as f64;
        let mut mean = vec![0.0; d];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; d];
        for x in xs {
            for ((s, v), m) in std.iter_mut().zip(x.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
            if *s == 0.0 || !s.is_finite() {
                *s = 1.0;
            }
        }
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel {
    pub alpha: Vec<f64>,
    pub spec: KernelSpec,
    pub lambda: f64,
    /// Training inputs after standardization (if any).
    pub x_train: Vec<Vec<f64>>,
    pub standardization: Option<Standardization>,
    /// Diagonal shift added on a failed first factorization, else 0.
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mae: f64,
    pub mse: f64,
    pub me: f64,
}

fn check_xy<X: AsRef<[f64]>>(xs: &[X], y: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid("KRR needs at least one training point"));
    }
    if xs.len() != y.len() {
        return Err(Error::Dimension { expected: xs.len(), got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite training target"));
    }
    Ok(())
}

/// Fit on raw inputs.
pub fn fit<X: AsRef<[f64]> + Sync>(xs: &[X], y: &[f64], spec: &KernelSpec, lambda: f64) -> Result<KrrModel> {
    fit_with(xs, y, spec, lambda, false)
}

/// Fit, optionally standardizing every input feature on the training set first.
pub fn fit_with<X: AsRef<[f64]> + Sync>(
    xs: &[X],
    y: &[f64],
    spec: &KernelSpec,
    lambda: f64,
    standardize: bool,
) -> Result<KrrModel> {
    check_xy(xs, y)?;
    let (x_train, standardization): (Vec<Vec<f64>>, _) = if standardize {
        let s = Standardization::fit(xs);
        (xs.iter().map(|x| s.apply(x.as_ref())).collect(), Some(s))
    } else {
        (xs.iter().map(|x| x.as_ref().to_vec()).collect(), None)
    };
    let k = gram(spec, &x_train)?;
    let (alpha, jitter) = solve_regularized(&k.entries, k.n, y, lambda)?;
    Ok(KrrModel {
        alpha,
        spec: *spec,
        lambda,
        x_train,
        standardization,
        jitter,
    })
}

/// Solve `(K + λI)α = y` by Cholesky with a one-time jitter of
/// `1e-12 · trace(K) / N` on failure. Up to two steps of iterative
/// refinement are taken before the residual check
/// `‖(K + λI + jI)α - y‖∞ ≤ 1e-8 ‖y‖∞`.
pub fn solve_regularized(k: &[f64], n: usize, y: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("ridge strength must be >= 0, got {lambda}")));
    }
    let trace: f64 = (0..n).map(|i| k[i * n + i]).sum();
    let factor = |shift: f64| {
        let mut a = k.to_vec();
        for i in 0..n {
            a[i * n + i] += shift;
        }
        cholesky_in_place(&mut a, n).map(|_| a)
    };
    let mut jitter = 0.0;
    let l = match factor(lambda) {
        Ok(l) => l,
        Err(_) => {
            jitter = 1e-12 * trace.abs() / n as f64;
            factor(lambda + jitter).map_err(|pivot| {
                Error::Factorization(format!(
                    "K + λI is not positive definite at pivot {pivot} (λ = {lambda:e}, jitter {jitter:e})"
                ))
            })?
        }
    };
    let shift = lambda + jitter;
    let residual = |alpha: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let row = &k[i * n..(i + 1) * n];
                row.iter().zip(alpha).map(|(a, b)| a * b).sum::<f64>() + shift * alpha[i] - y[i]
            })
            .collect()
    };
    let ynorm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut alpha = cholesky_solve(&l, n, y);
    let mut r = residual(&alpha);
    for _ in 0..2 {
        if r.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= 1e-8 * ynorm {
            break;
        }
        let delta = cholesky_solve(&l, n, &r);
        alpha.iter_mut().zip(&delta).for_each(|(a, d)| *a -= d);
        r = residual(&alpha);
    }
    let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(rmax <= 1e-8 * ynorm) || alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Factorization(format!(
            "residual {rmax:e} exceeds 1e-8·‖y‖∞ = {:e} (λ = {lambda:e})",
            1e-8 * ynorm
        )));
    }
    Ok((alpha, jitter))
}

impl KrrModel {
    pub fn predict<X: AsRef<[f64]> + Sync>(&self, xs: &[X]) -> Result<Vec<f64>> {
        predict(self, xs)
    }
}

/// `ŷ_j = Σ_i α_i k(x_i, x̂_j)`.
pub fn predict<X: AsRef<[f64]> + Sync>(model: &KrrModel, xs: &[X]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    let z: Vec<Vec<f64>> = match &model.standardization {
        Some(s) => xs.iter().map(|x| s.apply(x.as_ref())).collect(),
        None => xs.iter().map(|x| x.as_ref().to_vec()).collect(),
    };
    let kx = cross_gram(&model.spec, &model.x_train, &z)?;
    let m = z.len();
    let mut out = vec![0.0; m];
    for (i, a) in model.alpha.iter().enumerate() {
        for (o, k) in out.iter_mut().zip(&kx[i * m..(i + 1) * m]) {
            *o += a * k;
        }
    }
    Ok(out)
}

pub fn errors(y_true: &[f64], y_pred: &[f64]) -> Result<ErrorReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension { expected: y_true.len(), got: y_pred.len() });
    }
    if y_true.is_empty() {
        return Err(Error::invalid("error metrics of an empty set"));
    }
    let n = y_true.len() as f64;
    let (mut abs, mut sq, mut me) = (0.0, 0.0, 0.0f64);
    for (t, p) in y_true.iter().zip(y_pred) {
        let d = (t - p).abs();
        abs += d;
        sq += d * d;
        me = me.max(d);
    }
    Ok(ErrorReport { mae: abs / n, mse: sq / n, me })
}

/// `lo, lo + step, ..., hi` in log10 space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRange {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl LogRange {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Self {
        Self { lo, hi, steps }
    }

    pub fn single(v: f64) -> Self {
        Self::new(v, v, 1)
    }

    pub fn step(&self) -> f64 {
        if self.steps > 1 {
            (self.hi - self.lo) / (self.steps - 1) as f64
        } else {
            0.0
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.lo + i as f64 * self.step()).collect()
    }

    fn validate(&self, field: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.steps == 0 || self.hi < self.lo {
            return Err(Error::config(field, format!("need finite lo <= hi and steps >= 1, got {self:?}")));
        }
        if self.steps == 1 && self.lo != self.hi {
            return Err(Error::config(field, "a single-step range needs lo == hi"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub log_lambda: LogRange,
    pub log_gamma: LogRange,
    /// Only used by polynomial kernels.
    pub log_c: LogRange,
    #[serde(default)]
    pub refinement_rounds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            log_lambda: LogRange::new(-20.0, 6.0, 21),
            log_gamma: LogRange::new(-8.0, 8.0, 17),
            log_c: LogRange::new(-2.0, 2.0, 5),
            refinement_rounds: 2,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.log_lambda.validate("grid.log_lambda")?;
        self.log_gamma.validate("grid.log_gamma")?;
        self.log_c.validate("grid.log_c")
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub family: KernelFamily,
    pub round: usize,
    pub log_lambda: f64,
    pub log_gamma: f64,
    pub log_c: Option<f64>,
    pub outcome: std::result::Result<(ErrorReport, ErrorReport), String>,
}

impl ScanRow {
    pub fn test(&self) -> Option<&ErrorReport> {
        self.outcome.as_ref().ok().map(|(_, t)| t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub spec: KernelSpec,
    pub lambda: f64,
    pub train: ErrorReport,
    pub test: ErrorReport,
    /// Every evaluated point in evaluation order.
    pub scan: Vec<ScanRow>,
}

/// A hyperparameter point in log10 coordinates `(λ, γ, c)`.
type Point = [f64; 3];

fn spec_at(family: KernelFamily, p: &Point) -> Result<KernelSpec> {
    let c = if family.is_polynomial() { 10f64.powf(p[2]) } else { 0.0 };
    KernelSpec::new(family, 10f64.powf(p[1]), c)
}

/// Evaluate `points` (all sharing the split) grouping by kernel parameters
/// so each Gram matrix is built once.
fn evaluate_points<X: AsRef<[f64]> + Sync>(
    xs: &[X],
    y: &[f64],
    split: &SplitPlan,
    family: KernelFamily,
    points: &[Point],
    standardize: bool,
) -> Vec<std::result::Result<(ErrorReport, ErrorReport), String>> {
    let train_x: Vec<&[f64]> = split.train.iter().map(|&i| xs[i].as_ref()).collect();
    let test_x: Vec<&[f64]> = split.test.iter().map(|&i| xs[i].as_ref()).collect();
    let train_y: Vec<f64> = split.train.iter().map(|&i| y[i]).collect();
    let test_y: Vec<f64> = split.test.iter().map(|&i| y[i]).collect();
    let (train_z, test_z): (Vec<Vec<f64>>, Vec<Vec<f64>>) = if standardize {
        let s = Standardization::fit(&train_x);
        (
            train_x.iter().map(|x| s.apply(x)).collect(),
            test_x.iter().map(|x| s.apply(x)).collect(),
        )
    } else {
        (
            train_x.iter().map(|x| x.to_vec()).collect(),
            test_x.iter().map(|x| x.to_vec()).collect(),
        )
    };

    let mut groups: Vec<([u64; 2], Vec<usize>)> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let key = [p[1].to_bits(), p[2].to_bits()];
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    let per_group: Vec<Vec<(usize, std::result::Result<(ErrorReport, ErrorReport), String>)>> = groups
        .par_iter()
        .map(|(_, members)| {
            let spec = match spec_at(family, &points[members[0]]) {
                Ok(s) => s,
                Err(e) => return members.iter().map(|&i| (i, Err(e.to_string()))).collect(),
            };
            let prepared = gram(&spec, &train_z).and_then(|k| Ok((k, cross_gram(&spec, &train_z, &test_z)?)));
            let (k, kx) = match prepared {
                Ok(v) => v,
                Err(e) => return members.iter().map(|&i| (i, Err(e.to_string()))).collect(),
            };
            members
                .iter()
                .map(|&i| {
                    let lambda = 10f64.powf(points[i][0]);
                    let out = solve_regularized(&k.entries, k.n, &train_y, lambda).and_then(|(alpha, _)| {
                        let n = k.n;
                        let fit: Vec<f64> = (0..n)
                            .map(|r| k.entries[r * n..(r + 1) * n].iter().zip(&alpha).map(|(a, b)| a * b).sum())
                            .collect();
                        let m = test_z.len();
                        let mut pred = vec![0.0; m];
                        for (r, a) in alpha.iter().enumerate() {
                            for (o, kv) in pred.iter_mut().zip(&kx[r * m..(r + 1) * m]) {
                                *o += a * kv;
                            }
                        }
                        let tr = errors(&train_y, &fit)?;
                        let te = errors(&test_y, &pred)?;
                        if tr.mae.is_finite() && te.mae.is_finite() {
                            Ok((tr, te))
                        } else {
                            Err(Error::invalid("non-finite predictions"))
                        }
                    });
                    (i, out.map_err(|e| e.to_string()))
                })
                .collect()
        })
        .collect();
    let mut out: Vec<Option<_>> = vec![None; points.len()];
    for (i, r) in per_group.into_iter().flatten() {
        out[i] = Some(r);
    }
    out.into_iter().map(|r| r.expect("every point evaluated")).collect()
}

/// Strict-minimum of test MAE in list order, so ties go to the first point.
fn best_of(rows: &[ScanRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        if let Some(t) = r.test() {
            if best.map_or(true, |(_, b)| t.mae < b) {
                best = Some((i, t.mae));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Exhaustive scan of the log grid in lexicographic order (λ outermost,
/// then γ, then c), minimizing test MAE, then `refinement_rounds` rounds of
/// local search: each round halves the grid steps and evaluates the 3^D
/// neighbourhood of the incumbent.
pub fn grid_search<X: AsRef<[f64]> + Sync>(
    xs: &[X],
    y: &[f64],
    split: &SplitPlan,
    family: KernelFamily,
    grid: &GridSpec,
    standardize: bool,
) -> Result<GridResult> {
    grid.validate()?;
    check_xy(xs, y)?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::invalid("grid search needs non-empty train and test sets"));
    }
    let poly = family.is_polynomial();
    let c_points = if poly { grid.log_c.points() } else { vec![0.0] };
    let mut points = Vec::new();
    for &l in &grid.log_lambda.points() {
        for &g in &grid.log_gamma.points() {
            for &c in &c_points {
                points.push([l, g, c]);
            }
        }
    }
    let make_rows = |round: usize, pts: &[Point], outs: Vec<_>| -> Vec<ScanRow> {
        pts.iter()
            .zip(outs)
            .map(|(p, outcome)| ScanRow {
                family,
                round,
                log_lambda: p[0],
                log_gamma: p[1],
                log_c: poly.then_some(p[2]),
                outcome,
            })
            .collect()
    };
    let outs = evaluate_points(xs, y, split, family, &points, standardize);
    let mut scan = make_rows(0, &points, outs);
    let Some(first) = best_of(&scan) else {
        let log = scan
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| format!("  λ=1e{} γ=1e{}: {e}", r.log_lambda, r.log_gamma)))
            .collect::<Vec<_>>()
            .join("\n");
        return Err(Error::GridSearch { attempted: scan.len(), log });
    };
    let mut incumbent = scan[first].clone();
    let mut steps = [grid.log_lambda.step(), grid.log_gamma.step(), if poly { grid.log_c.step() } else { 0.0 }];
    for round in 1..=grid.refinement_rounds {
        steps.iter_mut().for_each(|s| *s /= 2.0);
        let centre = [incumbent.log_lambda, incumbent.log_gamma, incumbent.log_c.unwrap_or(0.0)];
        let offsets = |s: f64| if s > 0.0 { vec![-s, 0.0, s] } else { vec![0.0] };
        let mut hood = Vec::new();
        for dl in offsets(steps[0]) {
            for dg in offsets(steps[1]) {
                for dc in offsets(steps[2]) {
                    hood.push([centre[0] + dl, centre[1] + dg, centre[2] + dc]);
                }
            }
        }
        let outs = evaluate_points(xs, y, split, family, &hood, standardize);
        let rows = make_rows(round, &hood, outs);
        if let Some(b) = best_of(&rows) {
            if rows[b].test().unwrap().mae < incumbent.test().unwrap().mae {
                incumbent = rows[b].clone();
            }
        }
        scan.extend(rows);
    }
    let spec = spec_at(
        family,
        &[incumbent.log_lambda, incumbent.log_gamma, incumbent.log_c.unwrap_or(0.0)],
    )?;
    let (train, test) = incumbent.outcome.clone().expect("incumbent succeeded");
    Ok(GridResult {
        spec,
        lambda: 10f64.powf(incumbent.log_lambda),
        train,
        test,
        scan,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub train: ErrorReport,
    pub test: ErrorReport,
}

/// Refit with fixed hyperparameters on each of the fold plans.
pub fn cross_validate_plans<X: AsRef<[f64]> + Sync>(
    xs: &[X],
    y: &[f64],
    plans: &[SplitPlan],
    spec: &KernelSpec,
    lambda: f64,
    standardize: bool,
) -> Result<Vec<FoldReport>> {
    check_xy(xs, y)?;
    plans
        .iter()
        .map(|plan| {
            let tx: Vec<&[f64]> = plan.train.iter().map(|&i| xs[i].as_ref()).collect();
            let ty: Vec<f64> = plan.train.iter().map(|&i| y[i]).collect();
            let px: Vec<&[f64]> = plan.test.iter().map(|&i| xs[i].as_ref()).collect();
            let py: Vec<f64> = plan.test.iter().map(|&i| y[i]).collect();
            let model = fit_with(&tx, &ty, spec, lambda, standardize)?;
            Ok(FoldReport {
                train: errors(&ty, &model.predict(&tx)?)?,
                test: errors(&py, &model.predict(&px)?)?,
            })
        })
        .collect()
}

pub fn cross_validate<X: AsRef<[f64]> + Sync>(
    xs: &[X],
    y: &[f64],
    k: usize,
    seed: u64,
    spec: &KernelSpec,
    lambda: f64,
    standardize: bool,
) -> Result<Vec<FoldReport>> {
    let plans = cv_folds(xs.len(), k, seed)?;
    cross_validate_plans(xs, y, &plans, spec, lambda, standardize)
}

pub const DEFAULT_OVERFIT_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverfitFlag {
    pub flagged: bool,
    /// `test MAE / train MAE`; `+∞` when only the training error is zero.
    pub ratio: f64,
}

pub fn overfit_diagnostic(train: &ErrorReport, test: &ErrorReport, threshold: f64) -> OverfitFlag {
    let ratio = match (train.mae == 0.0, test.mae == 0.0) {
        (true, true) => 1.0,
        (true, false) => f64::INFINITY,
        _ => test.mae / train.mae,
    };
    OverfitFlag { flagged: ratio > threshold, ratio }
}

pub const SCAN_HEADER: [&str; 12] = [
    "family", "round", "log_lambda", "log_gamma", "log_c", "train_mae", "train_mse", "train_me", "test_mae",
    "test_mse", "test_me", "status",
];

/// One CSV row per evaluated grid point.
pub fn write_scan_csv<W: Write>(rows: &[ScanRow], writer: &mut csv::Writer<W>) -> Result<()> {
    for r in rows {
        let mut rec = vec![
            r.family.name(),
            r.round.to_string(),
            r.log_lambda.to_string(),
            r.log_gamma.to_string(),
            r.log_c.map(|c| c.to_string()).unwrap_or_default(),
        ];
        match &r.outcome {
            Ok((tr, te)) => {
                for v in [tr.mae, tr.mse, tr.me, te.mae, te.mse, te.me] {
                    rec.push(v.to_string());
                }
                rec.push("ok".into());
            }
            Err(e) => {
                rec.extend(std::iter::repeat(String::new()).take(6));
                rec.push(e.replace('\n', " "));
            }
        }
        writer.write_record(&rec)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::split;
    use crate::rng::SeededRng;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn points(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut r = SeededRng::new(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.normal()).collect()).collect();
        let y = xs.iter().map(|x| x.iter().map(|v| v.sin()).sum::<f64>() + 0.1 * r.normal()).collect();
        (xs, y)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn identity_kernel_halves_the_targets() {
        let (a, j) = solve_regularized(&[1.0, 0.0, 0.0, 1.0], 2, &[3.0, -5.0], 1.0).unwrap();
        assert!(rel(a[0], 1.5) < 1e-15 && rel(a[1], -2.5) < 1e-15);
        assert_eq!(j, 0.0);
    }

    #[test]
    fn huge_lambda_shrinks_to_y_over_lambda() {
        let (xs, y) = points(1, 6, 2);
        let m = fit(&xs, &y, &KernelSpec::gaussian(0.5).unwrap(), 1e12).unwrap();
        let ymax = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let amax = m.alpha.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(amax <= ymax / 1e12 * (1.0 + 1e-6));
    }

    #[test]
    fn two_point_hand_inverse() {
        let xs = [vec![0.0], vec![1.0]];
        let y = [1.0, 3.0];
        let (gamma, lambda) = (0.5f64, 0.1);
        let k01 = (-gamma).exp();
        let (a, b, c) = (1.0 + lambda, k01, 1.0 + lambda);
        let det = a * c - b * b;
        let want = [(c * y[0] - b * y[1]) / det, (-b * y[0] + a * y[1]) / det];
        let m = fit(&xs, &y, &KernelSpec::gaussian(gamma).unwrap(), lambda).unwrap();
        for i in 0..2 {
            assert!(rel(m.alpha[i], want[i]) < 1e-12);
        }
    }

    #[test]
    fn single_point_prediction() {
        let m = fit(&[vec![0.4, 0.2]], &[2.0], &KernelSpec::gaussian(1.0).unwrap(), 0.25).unwrap();
        assert!(rel(m.alpha[0], 2.0 / 1.25) < 1e-15);
        assert_eq!(m.predict(&[vec![0.4, 0.2]]).unwrap(), m.alpha);
        assert!(m.predict::<Vec<f64>>(&[]).unwrap().is_empty());
        assert!(m.predict(&[vec![0.4]]).is_err());
    }

    #[test]
    fn dense_inverse_oracle() {
        for seed in 0..20 {
            let n = 2 + seed as usize % 7;
            let (xs, y) = points(seed, n, 3);
            for spec in [KernelSpec::gaussian(0.3).unwrap(), KernelSpec::polynomial(2, 0.5, 1.0).unwrap()] {
                let lambda = 0.05;
                let m = fit(&xs, &y, &spec, lambda).unwrap();
                let k = gram(&spec, &xs).unwrap();
                let a = DMatrix::from_row_slice(n, n, &k.entries) + DMatrix::identity(n, n) * lambda;
                let want = a.try_inverse().unwrap() * nalgebra::DVector::from_column_slice(&y);
                let scale = want.amax();
                for i in 0..n {
                    assert!((m.alpha[i] - want[i]).abs() <= 1e-10 * scale, "{} vs {}", m.alpha[i], want[i]);
                }
            }
        }
    }

    #[test]
    fn interpolation_at_zero_lambda() {
        let (xs, y) = points(3, 10, 3);
        let m = fit(&xs, &y, &KernelSpec::gaussian(0.5).unwrap(), 0.0).unwrap();
        let p = m.predict(&xs).unwrap();
        for (a, b) in p.iter().zip(&y) {
            assert!(rel(*a, *b) < 1e-6);
        }
    }

    #[test]
    fn singular_kernel_needs_jitter_or_errors() {
        // two identical points: K is singular at λ = 0
        let xs = [vec![1.0], vec![1.0]];
        let m = fit(&xs, &[1.0, 1.0], &KernelSpec::gaussian(1.0).unwrap(), 0.0).unwrap();
        assert!(m.jitter > 0.0);
        // indefinite: jitter cannot rescue it
        let err = solve_regularized(&[0.0, 1.0, 1.0, 0.0], 2, &[1.0, 2.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::Factorization(_)), "{err}");
        assert!(err.to_string().contains("increase the ridge strength"));
    }

    #[test]
    fn error_metrics_by_hand() {
        assert_eq!(errors(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), ErrorReport::default());
        assert_eq!(errors(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), ErrorReport { mae: 0.5, mse: 0.5, me: 1.0 });
        let e = errors(&[1.0, 2.0, 3.0], &[1.25, 2.25, 3.25]).unwrap();
        assert_eq!((e.mae, e.me), (0.25, 0.25));
        assert!(errors(&[], &[]).is_err());
        assert!(errors(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn overfit_flags() {
        let r = |mae| ErrorReport { mae, mse: mae * mae, me: mae };
        assert!(overfit_diagnostic(&r(7.6e-14), &r(0.1102), 10.0).flagged);
        assert!(!overfit_diagnostic(&r(0.05), &r(0.05), 10.0).flagged);
        assert!(!overfit_diagnostic(&r(0.009), &r(0.0228), 10.0).flagged);
        let z = overfit_diagnostic(&r(0.0), &r(0.1), 10.0);
        assert!(z.flagged && z.ratio == f64::INFINITY);
        assert!(!overfit_diagnostic(&r(0.0), &r(0.0), 10.0).flagged);
    }

    #[test]
    fn single_point_grid() {
        let (xs, y) = points(5, 30, 2);
        let plan = split(30, 0.8, 1).unwrap();
        let grid = GridSpec {
            log_lambda: LogRange::single(-3.0),
            log_gamma: LogRange::single(-1.0),
            log_c: LogRange::single(0.0),
            refinement_rounds: 0,
        };
        let r = grid_search(&xs, &y, &plan, KernelFamily::Gaussian, &grid, false).unwrap();
        assert_eq!(r.scan.len(), 1);
        assert_eq!(r.lambda, 1e-3);
        assert_eq!(r.spec.gamma, 0.1);
        let m = fit(
            &plan.train.iter().map(|&i| xs[i].clone()).collect::<Vec<_>>(),
            &plan.train.iter().map(|&i| y[i]).collect::<Vec<_>>(),
            &r.spec,
            r.lambda,
        )
        .unwrap();
        let tx: Vec<_> = plan.test.iter().map(|&i| xs[i].clone()).collect();
        let ty: Vec<_> = plan.test.iter().map(|&i| y[i]).collect();
        let want = errors(&ty, &m.predict(&tx).unwrap()).unwrap();
        assert!(rel(r.test.mae, want.mae) < 1e-9);
    }

    #[test]
    fn grid_finds_the_generating_bandwidth() {
        // targets drawn from a Gaussian-kernel expansion with γ = 1
        let mut r = SeededRng::new(8);
        let xs: Vec<Vec<f64>> = (0..80).map(|_| vec![r.uniform() * 4.0, r.uniform() * 4.0]).collect();
        let centres: Vec<Vec<f64>> = (0..5).map(|_| vec![r.uniform() * 4.0, r.uniform() * 4.0]).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|x| {
                centres
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (k as f64 - 2.0) * (-(x[0] - c[0]).powi(2) - (x[1] - c[1]).powi(2)).exp())
                    .sum()
            })
            .collect();
        let plan = split(80, 0.8, 2).unwrap();
        let grid = GridSpec {
            log_lambda: LogRange::new(-10.0, -6.0, 3),
            log_gamma: LogRange::new(-2.0, 2.0, 5),
            log_c: LogRange::single(0.0),
            refinement_rounds: 1,
        };
        let res = grid_search(&xs, &y, &plan, KernelFamily::Gaussian, &grid, false).unwrap();
        assert_eq!(res.spec.gamma, 1.0);
        assert_eq!(res.scan.len(), 15 + 9);
    }

    #[test]
    fn all_failures_are_reported() {
        let xs = vec![vec![1.0]; 6];
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let plan = split(6, 0.5, 0).unwrap();
        let grid = GridSpec {
            log_lambda: LogRange::single(-30.0),
            log_gamma: LogRange::new(0.0, 1.0, 2),
            log_c: LogRange::single(0.0),
            refinement_rounds: 0,
        };
        match grid_search(&xs, &y, &plan, KernelFamily::Gaussian, &grid, false) {
            Err(Error::GridSearch { attempted, log }) => {
                assert_eq!(attempted, 2);
                assert_eq!(log.lines().count(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicated_halves_give_equal_folds() {
        let (xs, y) = points(6, 10, 2);
        let xx: Vec<_> = xs.iter().chain(&xs).cloned().collect();
        let yy: Vec<_> = y.iter().chain(&y).copied().collect();
        let plans = vec![
            SplitPlan { train: (0..10).collect(), test: (10..20).collect(), seed: 0 },
            SplitPlan { train: (10..20).collect(), test: (0..10).collect(), seed: 0 },
        ];
        let spec = KernelSpec::gaussian(0.5).unwrap();
        let f = cross_validate_plans(&xx, &yy, &plans, &spec, 1e-3, false).unwrap();
        assert_eq!(f[0], f[1]);
        let a = cross_validate(&xs, &y, 5, 3, &spec, 1e-3, true).unwrap();
        assert_eq!(a, cross_validate(&xs, &y, 5, 3, &spec, 1e-3, true).unwrap());
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn standardization_is_fitted_on_training_inputs() {
        let xs = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardization::fit(&xs);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 7.0]), vec![1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn alpha_norm_falls_with_lambda(seed in 0u64..1000, l1 in -4.0f64..1.0, dl in 0.1f64..3.0) {
            let (xs, y) = points(seed, 8, 3);
            let spec = KernelSpec::gaussian(0.4).unwrap();
            let norm = |l: f64| fit(&xs, &y, &spec, 10f64.powf(l)).unwrap().alpha.iter().map(|a| a * a).sum::<f64>();
            prop_assert!(norm(l1) >= norm(l1 + dl));
        }

        #[test]
        fn prediction_is_linear_in_targets(seed in 0u64..1000) {
            let (xs, y) = points(seed, 12, 3);
            let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
            let spec = KernelSpec::polynomial(3, 0.3, 1.0).unwrap();
            let a = fit(&xs, &y, &spec, 1e-2).unwrap();
            let b = fit(&xs, &y2, &spec, 1e-2).unwrap();
            let (pa, pb) = (a.predict(&xs).unwrap(), b.predict(&xs).unwrap());
            for i in 0..12 {
                prop_assert!((b.alpha[i] - 2.0 * a.alpha[i]).abs() <= 1e-9 * a.alpha[i].abs().max(1.0));
                prop_assert!((pb[i] - 2.0 * pa[i]).abs() <= 1e-9 * pa[i].abs().max(1.0));
            }
        }

        #[test]
        fn error_report_invariants(v in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
            let (t, p): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let e = errors(&t, &p).unwrap();
            prop_assert!(e.mae <= e.me * (1.0 + 1e-12));
            prop_assert!(e.mse <= e.me * e.me * (1.0 + 1e-12));
        }
    }
}
