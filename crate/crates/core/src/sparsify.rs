//! LASSO coordinate descent along a penalty path, support selection and
//! exhaustive best-subset (ℓ0) regression on the surviving columns.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{expand, expand_cached, standardize, FeatureMatrix};
use crate::krr::{errors, ErrorReport};
use crate::linalg::{axpy, dot, mean, ols_with_intercept, std_dev, ColMatrix};

/// `|γ_j|` above which a coefficient counts as active.
pub const ACTIVITY_THRESHOLD: f64 = 1e-10;

/// Largest support the exhaustive search accepts.
pub const DEFAULT_SUPPORT_GUARD: usize = 40;

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Convergence tolerance on the largest coefficient change in a full
    /// sweep; `None` means `1e-8 · std(y)`.
    pub tol: Option<f64>,
    pub max_sweeps: usize,
    pub intercept: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tol: None, max_sweeps: 10_000, intercept: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoResult {
    pub gamma: Vec<f64>,
    pub intercept: f64,
    pub active: Vec<usize>,
    pub lambda_hat: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// Objective after every sweep, starting with the initial point.
    pub trace: Vec<f64>,
}

/// `Σ_i (⟨γ, v_i⟩ + b - y_i)² + λ̂ ‖γ‖₁`.
pub fn objective(v: &ColMatrix, y: &[f64], gamma: &[f64], intercept: f64, lambda_hat: f64) -> f64 {
    let mut pred = v.mul_vec(gamma);
    pred.iter_mut().for_each(|p| *p += intercept);
    let rss: f64 = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum();
    rss + lambda_hat * gamma.iter().map(|g| g.abs()).sum::<f64>()
}

/// Smallest penalty with an all-zero solution: `2 max_j |⟨v_j, y - ȳ⟩|`
/// (or against `y` itself without an intercept).
pub fn lambda_max(v: &ColMatrix, y: &[f64], intercept: bool) -> f64 {
    let centre = if intercept { mean(y) } else { 0.0 };
    let yc: Vec<f64> = y.iter().map(|t| t - centre).collect();
    (0..v.ncols())
        .map(|j| 2.0 * dot(v.col(j), &yc).abs())
        .fold(0.0, f64::max)
}

struct Solver<'a> {
    v: &'a ColMatrix,
    y: &'a [f64],
    norms: Vec<f64>,
    gamma: Vec<f64>,
    intercept: f64,
    resid: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(v: &'a ColMatrix, y: &'a [f64], gamma: Vec<f64>, intercept: f64) -> Self {
        let norms = (0..v.ncols()).map(|j| dot(v.col(j), v.col(j))).collect();
        let mut s = Self { v, y, norms, gamma, intercept, resid: Vec::new() };
        s.refresh();
        s
    }

    /// Recompute `r = y - b - Vγ` from scratch.
    fn refresh(&mut self) {
        let pred = self.v.mul_vec(&self.gamma);
        self.resid = self.y.iter().zip(&pred).map(|(t, p)| t - p - self.intercept).collect();
    }

    fn objective(&self, lambda_hat: f64) -> f64 {
        self.resid.iter().map(|r| r * r).sum::<f64>() + lambda_hat * self.gamma.iter().map(|g| g.abs()).sum::<f64>()
    }

    fn update_intercept(&mut self) -> f64 {
        let shift = mean(&self.resid);
        self.intercept += shift;
        self.resid.iter_mut().for_each(|r| *r -= shift);
        shift.abs()
    }

    /// Exact minimization over `γ_j`; returns the absolute change.
    fn update(&mut self, j: usize, lambda_hat: f64) -> f64 {
        let nj = self.norms[j];
        if nj == 0.0 {
            return 0.0;
        }
        let col = self.v.col(j);
        let old = self.gamma[j];
        let rho = dot(col, &self.resid) + old * nj;
        let new = soft_threshold(rho, lambda_hat / 2.0) / nj;
        if new != old {
            axpy(old - new, col, &mut self.resid);
            self.gamma[j] = new;
        }
        (new - old).abs()
    }
}

/// Cyclic coordinate descent with exact soft-threshold updates.
///
/// Every pass over all columns is followed by passes restricted to the
/// nonzero coefficients until those settle; convergence is declared only
/// after a full pass whose largest coefficient change is within `tol`.
pub fn lasso_l1(v: &ColMatrix, y: &[f64], lambda_hat: f64, opts: &LassoOptions) -> Result<LassoResult> {
    lasso_l1_from(v, y, lambda_hat, opts, None)
}

/// As [`lasso_l1`], starting from `warm = (γ, b)` when given.
pub fn lasso_l1_from(
    v: &ColMatrix,
    y: &[f64],
    lambda_hat: f64,
    opts: &LassoOptions,
    warm: Option<(&[f64], f64)>,
) -> Result<LassoResult> {
    let (n, m) = (v.nrows(), v.ncols());
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    if !(lambda_hat >= 0.0 && lambda_hat.is_finite()) {
        return Err(Error::invalid(format!("penalty must be >= 0, got {lambda_hat}")));
    }
    let tol = opts.tol.unwrap_or_else(|| 1e-8 * std_dev(y));
    let (g0, b0) = match warm {
        Some((g, b)) if g.len() == m => (g.to_vec(), b),
        Some((g, _)) => return Err(Error::Dimension { expected: m, got: g.len() }),
        None => (vec![0.0; m], if opts.intercept { mean(y) } else { 0.0 }),
    };
    if lambda_hat >= lambda_max(v, y, opts.intercept) {
        // the all-zero point satisfies the optimality conditions exactly
        let intercept = if opts.intercept { mean(y) } else { 0.0 };
        let s = Solver::new(v, y, vec![0.0; m], intercept);
        let objective = s.objective(lambda_hat);
        return Ok(LassoResult {
            gamma: s.gamma,
            intercept,
            active: Vec::new(),
            lambda_hat,
            iterations: 0,
            converged: true,
            objective,
            trace: vec![objective],
        });
    }
    let mut s = Solver::new(v, y, g0, b0);
    let mut trace = vec![s.objective(lambda_hat)];
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        // full pass
        s.refresh();
        let mut delta: f64 = if opts.intercept { s.update_intercept() } else { 0.0 };
        for j in 0..m {
            delta = delta.max(s.update(j, lambda_hat));
        }
        sweeps += 1;
        trace.push(s.objective(lambda_hat));
        if delta <= tol {
            converged = true;
            break;
        }
        // passes over the current nonzeros
        let active: Vec<usize> = (0..m).filter(|&j| s.gamma[j] != 0.0).collect();
        while sweeps < opts.max_sweeps {
            let mut d: f64 = if opts.intercept { s.update_intercept() } else { 0.0 };
            for &j in &active {
                d = d.max(s.update(j, lambda_hat));
            }
            sweeps += 1;
            trace.push(s.objective(lambda_hat));
            if d <= tol {
                break;
            }
        }
    }
    s.refresh();
    let objective = s.objective(lambda_hat);
    let active = (0..m).filter(|&j| s.gamma[j].abs() > ACTIVITY_THRESHOLD).collect();
    Ok(LassoResult {
        gamma: s.gamma,
        intercept: s.intercept,
        active,
        lambda_hat,
        iterations: sweeps,
        converged,
        objective,
        trace,
    })
}

/// How path values map onto the penalty of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyScale {
    /// Path values are used verbatim as `λ̂` in the sum-of-squares objective.
    Raw,
    /// Path values are in correlation units: `λ̂ = 2 · N · std(y) · value`,
    /// which makes `value = max_j |corr(v_j, y)|` the all-zero threshold.
    Normalized,
}

impl PenaltyScale {
    pub fn to_raw(self, value: f64, n: usize, y_std: f64) -> f64 {
        match self {
            PenaltyScale::Raw => value,
            PenaltyScale::Normalized => 2.0 * n as f64 * y_std * value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    pub lasso: LassoOptions,
    pub scale: PenaltyScale,
    /// Chain solutions along the path. Without warm starts the path points
    /// are solved independently and in parallel.
    pub warm_start: bool,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self { lasso: LassoOptions::default(), scale: PenaltyScale::Normalized, warm_start: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    /// Path value as configured.
    pub lambda_hat: f64,
    /// Penalty actually used in the objective.
    pub lambda_raw: f64,
    pub active_size: usize,
    pub errors: ErrorReport,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub points: Vec<PathPoint>,
}

/// `lo, lo + step, ...` up to and including `hi` (within rounding).
pub fn linear_path(lo: f64, step: f64, hi: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| lo + i as f64 * step).collect()
}

/// Solve along strictly increasing path values.
///
/// With warm starts the first point is reached through a short
/// geometric descent from `λ̂_max`, and each later point starts from the
/// previous solution.
pub fn lasso_path(v: &ColMatrix, y: &[f64], lambdas: &[f64], opts: &PathOptions) -> Result<(PathReport, Vec<LassoResult>)> {
    if lambdas.is_empty() {
        return Err(Error::invalid("empty penalty path"));
    }
    if lambdas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("penalty path must be strictly increasing"));
    }
    let (n, y_std) = (y.len(), std_dev(y));
    let raw: Vec<f64> = lambdas.iter().map(|&l| opts.scale.to_raw(l, n, y_std)).collect();
    let results: Vec<LassoResult> = if opts.warm_start {
        let mut warm: Option<(Vec<f64>, f64)> = None;
        let lmax = lambda_max(v, y, opts.lasso.intercept);
        if raw[0] < lmax {
            let steps = 10;
            let ratio = (raw[0] / lmax).max(1e-12);
            for i in 1..steps {
                let l = lmax * ratio.powf(i as f64 / steps as f64);
                let r = lasso_l1_from(v, y, l, &opts.lasso, warm.as_ref().map(|(g, b)| (g.as_slice(), *b)))?;
                warm = Some((r.gamma, r.intercept));
            }
        }
        let mut out = Vec::with_capacity(raw.len());
        for &l in &raw {
            let r = lasso_l1_from(v, y, l, &opts.lasso, warm.as_ref().map(|(g, b)| (g.as_slice(), *b)))?;
            warm = Some((r.gamma.clone(), r.intercept));
            out.push(r);
        }
        out
    } else {
        raw.par_iter()
            .map(|&l| lasso_l1(v, y, l, &opts.lasso))
            .collect::<Result<Vec<_>>>()?
    };
    let mut points = Vec::with_capacity(results.len());
    for (r, &l) in results.iter().zip(lambdas) {
        if !r.converged {
            log::warn!("lasso at λ̂ = {l} stopped after {} sweeps without converging", r.iterations);
        }
        let mut pred = v.mul_vec(&r.gamma);
        pred.iter_mut().for_each(|p| *p += r.intercept);
        points.push(PathPoint {
            lambda_hat: l,
            lambda_raw: r.lambda_hat,
            active_size: r.active.len(),
            errors: errors(y, &pred)?,
            iterations: r.iterations,
            converged: r.converged,
        });
    }
    Ok((PathReport { points }, results))
}

/// Active set at the smallest path value whose active set has at most
/// `cap` members, else the last point's active set.
pub fn select_support(path: &[LassoResult], cap: usize) -> Result<Vec<usize>> {
    if cap == 0 {
        return Err(Error::invalid("support cap must be at least 1"));
    }
    let last = path.last().ok_or_else(|| Error::invalid("empty LASSO path"))?;
    Ok(path
        .iter()
        .find(|r| r.active.len() <= cap)
        .unwrap_or(last)
        .active
        .clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFormula {
    pub k: usize,
    /// `(label, raw-scale coefficient)`.
    pub terms: Vec<(String, f64)>,
    pub intercept: f64,
    pub errors: ErrorReport,
    /// Positions of the terms within the searched support.
    pub subset: Vec<usize>,
}

impl SparseFormula {
    /// Number of nonzero coefficients.
    pub fn l0_norm(&self) -> usize {
        self.terms.iter().filter(|(_, c)| *c != 0.0).count()
    }

    /// `H_E ≈ 0.9247*m*(1-m)*diff(V)^2 + 0.0173`
    pub fn render(&self) -> String {
        let mut s = String::from("H_E ≈");
        for (i, (label, c)) in self.terms.iter().enumerate() {
            let sign = if *c < 0.0 { "-" } else { "+" };
            if i == 0 {
                s.push_str(&format!(" {}{}*{label}", if *c < 0.0 { "-" } else { "" }, format_coef(c.abs())));
            } else {
                s.push_str(&format!(" {sign} {}*{label}", format_coef(c.abs())));
            }
        }
        let sign = if self.intercept < 0.0 { "-" } else { "+" };
        s.push_str(&format!(" {sign} {}", format_coef(self.intercept.abs())));
        s
    }

    pub fn predict(&self, columns: &[&[f64]]) -> Vec<f64> {
        let n = columns.first().map_or(0, |c| c.len());
        let mut out = vec![self.intercept; n];
        for ((_, c), col) in self.terms.iter().zip(columns) {
            axpy(*c, col, &mut out);
        }
        out
    }
}

/// Four decimals in the usual range, scientific notation outside it.
pub fn format_coef(c: f64) -> String {
    if c == 0.0 || (1e-3..1e5).contains(&c.abs()) {
        format!("{c:.4}")
    } else {
        format!("{c:.4e}")
    }
}

/// `Σ r² / N`, accumulated in index order.
pub fn mse_of(residuals: &[f64]) -> f64 {
    residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if c[i] < n - k + i {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        c[i] += 1;
        for t in i + 1..k {
            c[t] = c[t - 1] + 1;
        }
    }
}

/// Exhaustive best-subset OLS for `k = 1..=k_max` over raw-scale `columns`.
///
/// Each subset is fitted with an intercept; the smallest training MSE wins,
/// with ties going to the lexicographically first subset. Rank-deficient
/// subsets are skipped.
pub fn l0_search(columns: &[&[f64]], labels: &[String], y: &[f64], k_max: usize, guard: usize) -> Result<Vec<SparseFormula>> {
    let s = columns.len();
    if labels.len() != s {
        return Err(Error::Dimension { expected: s, got: labels.len() });
    }
    if s > guard {
        return Err(Error::SupportTooLarge { size: s, guard });
    }
    if s == 0 {
        return Err(Error::invalid("empty support: nothing survived the LASSO screen; lower the penalty"));
    }
    if k_max == 0 || k_max > s {
        return Err(Error::invalid(format!("k_max = {k_max} must lie in 1..={s} (support size)")));
    }
    for c in columns {
        if c.len() != y.len() {
            return Err(Error::Dimension { expected: y.len(), got: c.len() });
        }
    }
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let subsets = combinations(s, k);
        let best = subsets
            .par_iter()
            .enumerate()
            .filter_map(|(idx, sub)| {
                let cols: Vec<&[f64]> = sub.iter().map(|&j| columns[j]).collect();
                match ols_with_intercept(&cols, y) {
                    Some(fit) => Some((mse_of(&fit.residuals), idx)),
                    None => {
                        log::debug!("skipping rank-deficient subset {:?}", sub.iter().map(|&j| &labels[j]).collect::<Vec<_>>());
                        None
                    }
                }
            })
            .reduce_with(|a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
        let Some((_, idx)) = best else {
            return Err(Error::invalid(format!("every {k}-term subset of the support is rank deficient")));
        };
        let sub = &subsets[idx];
        let cols: Vec<&[f64]> = sub.iter().map(|&j| columns[j]).collect();
        let fit = ols_with_intercept(&cols, y).expect("winning subset is full rank");
        out.push(SparseFormula {
            k,
            terms: sub.iter().zip(&fit.coefficients).map(|(&j, &c)| (labels[j].clone(), c)).collect(),
            intercept: fit.intercept,
            // measured on the residuals themselves so that `errors.mse` is
            // bit-for-bit the selection criterion
            errors: errors(&fit.residuals, &vec![0.0; y.len()])?,
            subset: sub.clone(),
        });
    }
    Ok(out)
}

/// True iff training MSE never increases with `k`.
pub fn errors_nonincreasing_check(formulas: &[SparseFormula]) -> bool {
    formulas.windows(2).all(|w| w[1].errors.mse <= w[0].errors.mse)
}

pub fn write_path_csv<W: Write>(report: &PathReport, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["lambda_hat", "lambda_raw", "active_size", "mae", "mse", "me", "iterations", "converged"])?;
    for p in &report.points {
        w.write_record([
            p.lambda_hat.to_string(),
            p.lambda_raw.to_string(),
            p.active_size.to_string(),
            p.errors.mae.to_string(),
            p.errors.mse.to_string(),
            p.errors.me.to_string(),
            p.iterations.to_string(),
            p.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per term, plus an `intercept` row, for every formula.
pub fn write_formulas_csv<W: Write>(formulas: &[SparseFormula], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["k", "term", "label", "coefficient", "mae", "mse", "me"])?;
    for f in formulas {
        let rows = f
            .terms
            .iter()
            .enumerate()
            .map(|(i, (l, c))| ((i + 1).to_string(), l.as_str(), *c))
            .chain(std::iter::once(("0".to_string(), "intercept", f.intercept)));
        for (i, l, c) in rows {
            w.write_record([
                f.k.to_string(),
                i,
                l.to_string(),
                c.to_string(),
                f.errors.mae.to_string(),
                f.errors.mse.to_string(),
                f.errors.me.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Plain-text table in the `# | Functions` layout with error rows.
pub fn render_formulas(title: &str, formulas: &[SparseFormula]) -> String {
    let mut s = format!("{title}\n# | Functions\n");
    for f in formulas {
        s.push_str(&format!("{} | {}\n", f.k, f.render()));
    }
    for (name, get) in [
        ("MAE", (|e: &ErrorReport| e.mae) as fn(&ErrorReport) -> f64),
        ("MSE", |e: &ErrorReport| e.mse),
        ("ME", |e: &ErrorReport| e.me),
    ] {
        let vals: Vec<String> = formulas.iter().map(|f| format!("{:.4}", get(&f.errors))).collect();
        s.push_str(&format!("{name} | {}\n", vals.join(" | ")));
    }
    s
}

/// Settings of the expand → standardize → LASSO path → support → ℓ0 chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineOptions {
    pub max_degree: usize,
    pub lambda_lo: f64,
    pub lambda_step: f64,
    pub lambda_hi: f64,
    pub penalty_scale: PenaltyScale,
    pub warm_start: bool,
    pub support_cap: usize,
    pub k_max: usize,
    pub guard: usize,
    pub tol: Option<f64>,
    pub max_sweeps: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            max_degree: 3,
            lambda_lo: 0.001,
            lambda_step: 0.005,
            lambda_hi: 0.096,
            penalty_scale: PenaltyScale::Normalized,
            warm_start: true,
            support_cap: 30,
            k_max: 5,
            guard: DEFAULT_SUPPORT_GUARD,
            tol: None,
            max_sweeps: 10_000,
        }
    }
}

impl PipelineOptions {
    pub fn validate(&self) -> Result<()> {
        let f = |field: &str| format!("sparsify.{field}");
        if !(1..=3).contains(&self.max_degree) {
            return Err(Error::config(f("max_degree"), "must be 1, 2 or 3"));
        }
        if !(self.lambda_lo >= 0.0 && self.lambda_step > 0.0 && self.lambda_hi >= self.lambda_lo && self.lambda_hi.is_finite()) {
            return Err(Error::config(f("lambda_lo"), "need 0 <= lambda_lo <= lambda_hi and lambda_step > 0"));
        }
        if self.support_cap == 0 {
            return Err(Error::config(f("support_cap"), "must be at least 1"));
        }
        if self.support_cap > self.guard {
            return Err(Error::config(f("support_cap"), format!("exceeds the exhaustive-search guard {}", self.guard)));
        }
        if self.k_max == 0 {
            return Err(Error::config(f("k_max"), "must be at least 1"));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config(f("tol"), "must be positive"));
            }
        }
        if self.max_sweeps == 0 {
            return Err(Error::config(f("max_sweeps"), "must be at least 1"));
        }
        Ok(())
    }

    pub fn lambdas(&self) -> Vec<f64> {
        linear_path(self.lambda_lo, self.lambda_step, self.lambda_hi)
    }

    pub fn path_options(&self) -> PathOptions {
        PathOptions {
            lasso: LassoOptions { tol: self.tol, max_sweeps: self.max_sweeps, intercept: true },
            scale: self.penalty_scale,
            warm_start: self.warm_start,
        }
    }
}

#[derive(Debug)]
pub struct PipelineOutcome {
    /// Standardized expanded features.
    pub features: FeatureMatrix,
    pub path: PathReport,
    /// Column indices into `features` that reached the ℓ0 stage.
    pub support: Vec<usize>,
    pub formulas: Vec<SparseFormula>,
    pub cache_file: Option<PathBuf>,
}

impl PipelineOutcome {
    pub fn support_labels(&self) -> Vec<String> {
        self.support.iter().map(|&j| self.features.labels[j].clone()).collect()
    }

    /// Raw-scale support columns, in support order.
    pub fn support_columns(&self) -> Vec<Vec<f64>> {
        self.support.iter().map(|&j| self.features.raw_column(j)).collect()
    }
}

/// Run the whole sparsification chain on descriptor columns `base`. With a
/// `cache_dir` the expansion is read from or written to the feature cache.
pub fn run_pipeline(
    base: &ColMatrix,
    base_labels: &[String],
    y: &[f64],
    opts: &PipelineOptions,
    cache: Option<(&Path, &str)>,
) -> Result<PipelineOutcome> {
    opts.validate()?;
    let (fm, cache_file) = match cache {
        Some((dir, tag)) => {
            let (fm, p) = expand_cached(base, base_labels, opts.max_degree, tag, dir).map_err(|e| e.in_stage("expand"))?;
            (fm, Some(p))
        }
        None => (expand(base, base_labels, opts.max_degree).map_err(|e| e.in_stage("expand"))?, None),
    };
    log::info!("expanded {} descriptors to {} features ({} pruned)", base_labels.len(), fm.ncols(), fm.pruned.len());
    let (features, _) = standardize(fm);
    let (path, results) =
        lasso_path(&features.columns, y, &opts.lambdas(), &opts.path_options()).map_err(|e| e.in_stage("lasso"))?;
    let support = select_support(&results, opts.support_cap).map_err(|e| e.in_stage("support"))?;
    let raw: Vec<Vec<f64>> = support.iter().map(|&j| features.raw_column(j)).collect();
    let cols: Vec<&[f64]> = raw.iter().map(Vec::as_slice).collect();
    let labels: Vec<String> = support.iter().map(|&j| features.labels[j].clone()).collect();
    let k_max = opts.k_max.min(support.len());
    if k_max < opts.k_max {
        log::warn!("support has only {} columns; formulas stop at k = {k_max}", support.len());
    }
    let formulas = l0_search(&cols, &labels, y, k_max.max(1), opts.guard).map_err(|e| e.in_stage("l0"))?;
    Ok(PipelineOutcome { features, path, support, formulas, cache_file })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn fixture(seed: u64, n: usize, m: usize) -> (ColMatrix, Vec<f64>) {
        let mut r = SeededRng::new(seed);
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let c: Vec<f64> = (0..n).map(|_| r.normal()).collect();
                let (mu, sd) = (mean(&c), std_dev(&c));
                c.iter().map(|v| (v - mu) / sd).collect()
            })
            .collect();
        let v = ColMatrix::from_columns(n, &cols).unwrap();
        let y = (0..n).map(|i| 1.5 * v.get(i, 0) - 0.8 * v.get(i, m - 1) + 0.3 * r.normal() + 2.0).collect();
        (v, y)
    }

    #[test]
    fn soft_threshold_values() {
        assert_eq!(soft_threshold(2.0, 1.0), 1.0);
        assert_eq!(soft_threshold(-2.0, 1.0), -1.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn single_coordinate_closed_form() {
        let v = ColMatrix::from_columns(2, &[vec![1.0, 1.0]]).unwrap();
        let opts = LassoOptions { intercept: false, tol: Some(1e-15), ..Default::default() };
        let r = lasso_l1(&v, &[1.0, 1.0], 2.0, &opts).unwrap();
        assert_eq!(r.gamma, vec![0.5]);
        assert!(r.converged);
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let (v, y) = fixture(1, 40, 6);
        let lmax = lambda_max(&v, &y, true);
        for l in [lmax, lmax * 1.5] {
            let r = lasso_l1(&v, &y, l, &LassoOptions::default()).unwrap();
            assert!(r.gamma.iter().all(|&g| g == 0.0));
            assert!(r.active.is_empty());
            assert!((r.intercept - mean(&y)).abs() < 1e-12);
        }
        let r = lasso_l1(&v, &y, lmax * 0.9, &LassoOptions::default()).unwrap();
        assert!(!r.active.is_empty());
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let (v, y) = fixture(2, 60, 8);
        let opts = LassoOptions { tol: Some(1e-14), max_sweeps: 100_000, ..Default::default() };
        let r = lasso_l1(&v, &y, 0.0, &opts).unwrap();
        let cols: Vec<&[f64]> = (0..8).map(|j| v.col(j)).collect();
        let ols = ols_with_intercept(&cols, &y).unwrap();
        for (a, b) in r.gamma.iter().zip(&ols.coefficients) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn warm_start_and_path_shapes() {
        let (v, y) = fixture(3, 80, 10);
        let lambdas = linear_path(0.001, 0.005, 0.096);
        assert_eq!(lambdas.len(), 20);
        assert!((lambdas[19] - 0.096).abs() < 1e-12);
        let (rep, res) = lasso_path(&v, &y, &lambdas, &PathOptions::default()).unwrap();
        assert_eq!(rep.points.len(), 20);
        assert!(res.iter().all(|r| r.converged));
        assert!(rep.points.last().unwrap().active_size <= rep.points[0].active_size);
        let cold = PathOptions { warm_start: false, ..Default::default() };
        let (rep2, _) = lasso_path(&v, &y, &lambdas, &cold).unwrap();
        for (a, b) in rep.points.iter().zip(&rep2.points) {
            assert_eq!(a.active_size, b.active_size);
            assert!((a.errors.mae - b.errors.mae).abs() < 1e-6);
        }
        assert!(lasso_path(&v, &y, &[0.1, 0.1], &PathOptions::default()).is_err());
        assert!(lasso_path(&v, &y, &[], &PathOptions::default()).is_err());
    }

    #[test]
    fn support_selection_rules() {
        let mk = |active: Vec<usize>| LassoResult {
            gamma: vec![],
            intercept: 0.0,
            active,
            lambda_hat: 0.0,
            iterations: 0,
            converged: true,
            objective: 0.0,
            trace: vec![],
        };
        let path = vec![mk((0..50).collect()), mk((0..31).collect()), mk((0..30).collect()), mk(vec![1, 2])];
        assert_eq!(select_support(&path, 30).unwrap().len(), 30);
        assert_eq!(select_support(&path, 100).unwrap().len(), 50);
        assert_eq!(select_support(&path, 1).unwrap(), vec![1, 2]);
        let empty_end = vec![mk(vec![3, 4]), mk(vec![])];
        assert!(select_support(&empty_end, 1).unwrap().is_empty());
        assert!(select_support(&[], 5).is_err());
        assert!(select_support(&path, 0).is_err());
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(4, 2), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(5, 1).len(), 5);
        assert_eq!(combinations(12, 5).len(), 792);
        assert!(combinations(2, 3).is_empty());
    }

    #[test]
    fn exact_representer_is_found() {
        let (v, _) = fixture(4, 30, 5);
        let y: Vec<f64> = v.col(3).iter().map(|x| 2.0 * x + 1.0).collect();
        let cols: Vec<&[f64]> = (0..5).map(|j| v.col(j)).collect();
        let labels: Vec<String> = (0..5).map(|j| format!("c{j}")).collect();
        let f = l0_search(&cols, &labels, &y, 3, 40).unwrap();
        assert_eq!(f[0].terms[0].0, "c3");
        assert!(f[0].errors.mae < 1e-12);
        assert!(f.iter().all(|x| x.l0_norm() == x.k));
    }

    #[test]
    fn l0_guards() {
        let col = vec![1.0, 2.0, 3.0];
        let cols: Vec<&[f64]> = vec![&col; 41];
        let labels: Vec<String> = (0..41).map(|j| j.to_string()).collect();
        assert!(matches!(l0_search(&cols, &labels, &col, 2, 40), Err(Error::SupportTooLarge { size: 41, guard: 40 })));
        assert!(l0_search(&[], &[], &col, 1, 40).is_err());
        assert!(l0_search(&cols[..2], &labels[..2], &col, 3, 40).is_err());
    }

    #[test]
    fn rendering() {
        let f = SparseFormula {
            k: 1,
            terms: vec![("m*(1-m)*diff(V)^2".into(), 0.92468)],
            intercept: 0.01733,
            errors: ErrorReport { mae: 0.1, mse: 0.02, me: 0.3 },
            subset: vec![0],
        };
        assert_eq!(f.render(), "H_E ≈ 0.9247*m*(1-m)*diff(V)^2 + 0.0173");
        let g = SparseFormula {
            k: 2,
            terms: vec![("a".into(), -1.5), ("b".into(), -2e-6)],
            intercept: -3.0,
            ..f.clone()
        };
        assert_eq!(g.render(), "H_E ≈ -1.5000*a - 2.0000e-6*b - 3.0000");
        let text = render_formulas("fused", &[f, g]);
        assert!(text.contains("# | Functions"));
        assert!(text.contains("MAE | 0.1000 | 0.1000"));
        assert!(!errors_nonincreasing_check(&[
            SparseFormula { errors: ErrorReport { mae: 1.0, mse: 1.0, me: 1.0 }, ..Default::default() },
            SparseFormula { errors: ErrorReport { mae: 1.0, mse: 2.0, me: 2.0 }, ..Default::default() },
        ]));
    }

    fn objective_along(v: &ColMatrix, y: &[f64], gamma: &[f64], b: f64, lambda: f64, j: usize, eps: f64) -> f64 {
        let mut g = gamma.to_vec();
        g[j] += eps;
        objective(v, y, &g, b, lambda)
    }

    proptest! {
        #[test]
        fn objective_never_increases(seed in any::<u64>(), m in 2usize..15, lf in 0.0f64..0.5) {
            let (v, y) = fixture(seed, 30, m);
            let l = lf * lambda_max(&v, &y, true);
            let r = lasso_l1(&v, &y, l, &LassoOptions { tol: Some(1e-12), ..Default::default() }).unwrap();
            for w in r.trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-13), "{} -> {}", w[0], w[1]);
            }
        }

        #[test]
        fn coordinates_minimize_their_restriction(seed in any::<u64>(), lf in 0.01f64..0.5) {
            let (v, y) = fixture(seed, 25, 6);
            let l = lf * lambda_max(&v, &y, true);
            let r = lasso_l1(&v, &y, l, &LassoOptions { tol: Some(1e-14), max_sweeps: 100_000, ..Default::default() }).unwrap();
            let base = objective(&v, &y, &r.gamma, r.intercept, l);
            for j in 0..6 {
                for eps in [1e-6, -1e-6] {
                    prop_assert!(objective_along(&v, &y, &r.gamma, r.intercept, l, j, eps) >= base * (1.0 - 1e-14));
                }
            }
        }
    }
}

impl Default for SparseFormula {
    fn default() -> Self {
        Self { k: 0, terms: Vec::new(), intercept: 0.0, errors: ErrorReport::default(), subset: Vec::new() }
    }
}
