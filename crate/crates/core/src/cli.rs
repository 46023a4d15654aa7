//! Batch stages behind the `hemix` binary.
//!
//! Every stage reads its inputs from and writes its outputs under
//! `paths.out_dir`:
//!
//! ```text
//! data/<cfg>.csv, data/<cfg>.manifest.json          gen-data
//! krr/<cfg>/scan.csv, summary.{csv,txt}, best.json    krr-scan
//! krr/<cfg>/scatter_<family>.csv, cv.csv              krr-fit
//! sparsify/<cfg>/path.csv, formulas.{txt,csv,json},
//!               support.txt                           sparsify
//! cache/<key>.hefm                                    sparsify (feature cache)
//! report/mae_vs_k.csv, formula_scatter_<cfg>.csv,
//!        young_vs_volume.csv, report.json             report
//! timings.json                                        every stage
//! ```
//!
//! All artifacts except `timings.json` depend only on the configuration and
//! the elemental table, and are byte-identical across runs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::{cv_folds, generate_synthetic, split, Configuration, DataSet, SplitPlan};
use crate::elementals::{Element, ElementalTable, Phase, Property};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::krr::{
    cross_validate_plans, fit_with, grid_search, overfit_diagnostic, write_scan_csv, ErrorReport, SCAN_HEADER,
};
use crate::sparsify::{render_formulas, run_pipeline, write_formulas_csv, write_path_csv, SparseFormula};

pub const STAGES: [&str; 5] = ["gen-data", "krr-scan", "krr-fit", "sparsify", "report"];

/// Files written by one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutput {
    pub stage: String,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    /// Paths relative to the output directory, keyed by stage.
    pub artifacts: BTreeMap<String, Vec<PathBuf>>,
    /// Rendered formulas per configuration, `k = 1..`.
    pub formulas: BTreeMap<String, Vec<String>>,
    pub krr_best: BTreeMap<String, Vec<BestModel>>,
}

/// Best grid point of one kernel family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestModel {
    pub family: String,
    pub spec: KernelSpec,
    pub lambda: f64,
    pub train: ErrorReport,
    pub test: ErrorReport,
    pub overfit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DataManifest {
    configuration: Configuration,
    rows: usize,
    source: String,
    seed: u64,
    noise_sigma: f64,
    terms: Vec<(String, f64)>,
    dropped: Vec<String>,
    config_hash: String,
}

pub fn data_csv(out: &Path, c: Configuration) -> PathBuf {
    out.join("data").join(format!("{c}.csv"))
}

pub fn krr_dir(out: &Path, c: Configuration) -> PathBuf {
    out.join("krr").join(c.name())
}

pub fn sparsify_dir(out: &Path, c: Configuration) -> PathBuf {
    out.join("sparsify").join(c.name())
}

pub fn report_dir(out: &Path) -> PathBuf {
    out.join("report")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

/// Dataset CSV written by `gen-data`, re-validated against the table.
pub fn load_dataset(cfg: &RunConfig, table: &ElementalTable, c: Configuration) -> Result<DataSet> {
    let path = data_csv(&cfg.paths.out_dir, c);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    DataSet::read_csv(File::open(&path)?, table, &cfg.scheme)
}

/// Run `f` as stage `name`, validating the configuration first and
/// recording wall-clock time in `timings.json`.
pub fn run_stage(cfg: &RunConfig, name: &str, f: impl FnOnce(&RunConfig) -> Result<StageOutput>) -> Result<StageOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let out = f(cfg)?;
    record_timing(&cfg.paths.out_dir, name, start.elapsed().as_secs_f64())?;
    log::info!("{name}: {} artifacts in {:.2?}", out.artifacts.len(), start.elapsed());
    Ok(out)
}

fn record_timing(out: &Path, stage: &str, seconds: f64) -> Result<()> {
    let path = out.join("timings.json");
    let mut t: BTreeMap<String, f64> = if path.is_file() { read_json(&path).unwrap_or_default() } else { BTreeMap::new() };
    t.insert(stage.to_string(), seconds);
    write_json(&path, &t)
}

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<StageOutput> {
    let table = cfg.table()?;
    let out = &cfg.paths.out_dir;
    let hash = cfg.hash()?;
    let mut artifacts = Vec::new();
    for &c in &cfg.dataset.configurations {
        let model = cfg.dataset.model.planted(cfg.seeds.data);
        let (ds, source, sigma) = match &cfg.dataset.external_csv {
            Some(p) => {
                let ds = DataSet::read_csv(File::open(p)?, &table, &cfg.scheme).map_err(|e| e.in_stage("gen-data"))?;
                if ds.configuration != c {
                    return Err(Error::config(
                        "dataset.configurations",
                        format!("{} holds a {} dataset, not {c}", p.display(), ds.configuration),
                    ));
                }
                (ds, p.display().to_string(), 0.0)
            }
            None => {
                let ds = generate_synthetic(&table, &cfg.scheme, &model, c, &cfg.dataset.ratios)
                    .map_err(|e| e.in_stage("gen-data"))?;
                let clean = model.evaluate(&table, &cfg.scheme, &ds.points.iter().map(|p| p.pair).collect::<Vec<_>>())?;
                (ds, "synthetic".to_string(), model.sigma_for(&clean))
            }
        };
        let csv_path = data_csv(out, c);
        ds.write_csv(create(&csv_path)?)?;
        let manifest = DataManifest {
            configuration: c,
            rows: ds.len(),
            source,
            seed: cfg.seeds.data,
            noise_sigma: sigma,
            terms: model.terms.iter().map(|t| (t.term.clone(), t.coefficient)).collect(),
            dropped: ds.dropped.clone(),
            config_hash: hash.clone(),
        };
        let man_path = csv_path.with_extension("manifest.json");
        write_json(&man_path, &manifest)?;
        log::info!("{c}: {} rows, {} descriptors", ds.len(), ds.labels.len());
        artifacts.extend([csv_path, man_path]);
    }
    Ok(StageOutput { stage: "gen-data".into(), artifacts })
}

struct KrrInputs {
    ds: DataSet,
    xs: Vec<Vec<f64>>,
    y: Vec<f64>,
    plan: SplitPlan,
}

fn krr_inputs(cfg: &RunConfig, table: &ElementalTable, c: Configuration) -> Result<KrrInputs> {
    let ds = load_dataset(cfg, table, c)?;
    let kds = ds.redescribe(table, &cfg.krr.descriptors)?;
    let xs: Vec<Vec<f64>> = kds.points.iter().map(|p| p.x.clone()).collect();
    let y = kds.y();
    let plan = split(xs.len(), cfg.krr.split_ratio, cfg.seeds.split)?;
    Ok(KrrInputs { ds, xs, y, plan })
}

fn fmt_flag(ratio: f64) -> String {
    if ratio.is_finite() {
        format!("{ratio:.3}")
    } else {
        "inf".into()
    }
}

pub fn cmd_krr_scan(cfg: &RunConfig) -> Result<StageOutput> {
    let table = cfg.table()?;
    let families = cfg.krr.kernel_families()?;
    let mut artifacts = Vec::new();
    for &c in &cfg.krr.configurations {
        let inp = krr_inputs(cfg, &table, c)?;
        let dir = krr_dir(&cfg.paths.out_dir, c);
        let scan_path = dir.join("scan.csv");
        let mut scan = csv::Writer::from_writer(create(&scan_path)?);
        scan.write_record(SCAN_HEADER)?;
        let mut best = Vec::new();
        let mut summary = csv::Writer::from_writer(create(&dir.join("summary.csv"))?);
        summary.write_record([
            "family", "lambda", "gamma", "c", "train_mae", "train_mse", "train_me", "test_mae", "test_mse", "test_me",
            "overfit_ratio", "overfit",
        ])?;
        let mut text = format!("{c}: kernel ridge regression, {} train / {} test\n", inp.plan.train.len(), inp.plan.test.len());
        text.push_str("kernel | lambda | gamma | c | train MAE | test MAE | train MSE | test MSE | overfit\n");
        for &family in &families {
            let r = grid_search(&inp.xs, &inp.y, &inp.plan, family, &cfg.krr.grid, cfg.krr.standardize)
                .map_err(|e| e.in_stage("krr-scan"))?;
            write_scan_csv(&r.scan, &mut scan)?;
            let flag = overfit_diagnostic(&r.train, &r.test, cfg.krr.overfit_threshold);
            summary.write_record([
                family.name(),
                r.lambda.to_string(),
                r.spec.gamma.to_string(),
                r.spec.c.to_string(),
                r.train.mae.to_string(),
                r.train.mse.to_string(),
                r.train.me.to_string(),
                r.test.mae.to_string(),
                r.test.mse.to_string(),
                r.test.me.to_string(),
                fmt_flag(flag.ratio),
                flag.flagged.to_string(),
            ])?;
            text.push_str(&format!(
                "{} | {:.3e} | {:.3e} | {:.3e} | {:.4e} | {:.4e} | {:.4e} | {:.4e} | {}\n",
                family.name(),
                r.lambda,
                r.spec.gamma,
                r.spec.c,
                r.train.mae,
                r.test.mae,
                r.train.mse,
                r.test.mse,
                if flag.flagged { format!("yes (ratio {})", fmt_flag(flag.ratio)) } else { "no".into() },
            ));
            best.push(BestModel {
                family: family.name(),
                spec: r.spec,
                lambda: r.lambda,
                train: r.train,
                test: r.test,
                overfit: flag.flagged,
            });
        }
        scan.flush()?;
        summary.flush()?;
        write_text(&dir.join("summary.txt"), &text)?;
        write_json(&dir.join("best.json"), &best)?;
        artifacts.extend([scan_path, dir.join("summary.csv"), dir.join("summary.txt"), dir.join("best.json")]);
    }
    Ok(StageOutput { stage: "krr-scan".into(), artifacts })
}

/// Refit each family's best grid point on the scan's split, emit
/// true-vs-predicted scatter data, and cross-validate at the same
/// hyperparameters.
pub fn cmd_krr_fit(cfg: &RunConfig) -> Result<StageOutput> {
    let table = cfg.table()?;
    let mut artifacts = Vec::new();
    for &c in &cfg.krr.configurations {
        let dir = krr_dir(&cfg.paths.out_dir, c);
        let best: Vec<BestModel> = read_json(&dir.join("best.json"))?;
        let inp = krr_inputs(cfg, &table, c)?;
        let folds = cv_folds(inp.xs.len(), cfg.krr.cv_folds, cfg.seeds.cv)?;
        let cv_path = dir.join("cv.csv");
        let mut cv = csv::Writer::from_writer(create(&cv_path)?);
        cv.write_record(["family", "fold", "train_mae", "train_mse", "train_me", "test_mae", "test_mse", "test_me"])?;
        for b in &best {
            let tx: Vec<&[f64]> = inp.plan.train.iter().map(|&i| inp.xs[i].as_slice()).collect();
            let ty: Vec<f64> = inp.plan.train.iter().map(|&i| inp.y[i]).collect();
            let model = fit_with(&tx, &ty, &b.spec, b.lambda, cfg.krr.standardize).map_err(|e| e.in_stage("krr-fit"))?;
            let pred = model.predict(&inp.xs)?;
            let scatter_path = dir.join(format!("scatter_{}.csv", b.family));
            let mut w = csv::Writer::from_writer(create(&scatter_path)?);
            w.write_record(["pair", "phase", "m", "set", "y_true", "y_pred"])?;
            let mut is_train = vec![false; inp.xs.len()];
            inp.plan.train.iter().for_each(|&i| is_train[i] = true);
            for (i, p) in inp.ds.points.iter().enumerate() {
                w.write_record([
                    p.pair.pair_name(),
                    p.pair.phase().to_string(),
                    p.pair.m().to_string(),
                    if is_train[i] { "train" } else { "test" }.to_string(),
                    inp.y[i].to_string(),
                    pred[i].to_string(),
                ])?;
            }
            w.flush()?;
            artifacts.push(scatter_path);
            let reports = cross_validate_plans(&inp.xs, &inp.y, &folds, &b.spec, b.lambda, cfg.krr.standardize)
                .map_err(|e| e.in_stage("krr-fit"))?;
            for (k, r) in reports.iter().enumerate() {
                let mut rec = vec![b.family.clone(), (k + 1).to_string()];
                for v in [r.train.mae, r.train.mse, r.train.me, r.test.mae, r.test.mse, r.test.me] {
                    rec.push(v.to_string());
                }
                cv.write_record(&rec)?;
            }
        }
        cv.flush()?;
        artifacts.push(cv_path);
    }
    Ok(StageOutput { stage: "krr-fit".into(), artifacts })
}

pub fn cmd_sparsify(cfg: &RunConfig) -> Result<StageOutput> {
    let table = cfg.table()?;
    let out = &cfg.paths.out_dir;
    let tag = serde_json::to_string(&cfg.scheme)?;
    let mut artifacts = Vec::new();
    for &c in &cfg.dataset.configurations {
        let ds = load_dataset(cfg, &table, c)?;
        let y = ds.y();
        let res = run_pipeline(&ds.matrix(), &ds.labels, &y, &cfg.sparsify, Some((&out.join("cache"), &tag)))?;
        let dir = sparsify_dir(out, c);
        let paths = ["path.csv", "formulas.txt", "formulas.csv", "formulas.json", "support.txt"].map(|f| dir.join(f));
        write_path_csv(&res.path, create(&paths[0])?)?;
        let title = format!("{c} ({} points, {} features, support {})", ds.len(), res.features.ncols(), res.support.len());
        write_text(&paths[1], &render_formulas(&title, &res.formulas))?;
        write_formulas_csv(&res.formulas, create(&paths[2])?)?;
        write_json(&paths[3], &res.formulas)?;
        write_text(&paths[4], &(res.support_labels().join("\n") + "\n"))?;
        log::info!("{c}: {}", res.formulas.last().map(|f| f.render()).unwrap_or_default());
        artifacts.extend(paths);
    }
    Ok(StageOutput { stage: "sparsify".into(), artifacts })
}

/// Every artifact that `report` consumes, for the configured stages.
pub fn expected_inputs(cfg: &RunConfig) -> Vec<PathBuf> {
    let out = &cfg.paths.out_dir;
    let mut v = Vec::new();
    for &c in &cfg.dataset.configurations {
        v.push(data_csv(out, c));
        v.push(sparsify_dir(out, c).join("formulas.json"));
    }
    for &c in &cfg.krr.configurations {
        let d = krr_dir(out, c);
        v.push(d.join("best.json"));
        v.push(d.join("cv.csv"));
        for f in &cfg.krr.families {
            v.push(d.join(format!("scatter_{f}.csv")));
        }
    }
    v
}

/// Value of a `*`-joined product of descriptor labels for every point.
fn product_column(ds: &DataSet, term: &str) -> Result<Vec<f64>> {
    let idx: Vec<usize> = term
        .split('*')
        .map(|f| ds.label_index(f).ok_or_else(|| Error::UnknownLabel(f.to_string())))
        .collect::<Result<_>>()?;
    Ok(ds.points.iter().map(|p| idx.iter().map(|&j| p.x[j]).product()).collect())
}

pub fn cmd_report(cfg: &RunConfig) -> Result<StageOutput> {
    let missing: Vec<PathBuf> = expected_inputs(cfg).into_iter().filter(|p| !p.is_file()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let table = cfg.table()?;
    let out = &cfg.paths.out_dir;
    let dir = report_dir(out);
    let mut artifacts = Vec::new();

    let mae_path = dir.join("mae_vs_k.csv");
    let mut mae = csv::Writer::from_writer(create(&mae_path)?);
    mae.write_record(["configuration", "k", "mae", "mse", "me"])?;
    let mut formulas_by_cfg = BTreeMap::new();
    for &c in &cfg.dataset.configurations {
        let formulas: Vec<SparseFormula> = read_json(&sparsify_dir(out, c).join("formulas.json"))?;
        for f in &formulas {
            mae.write_record([c.to_string(), f.k.to_string(), f.errors.mae.to_string(), f.errors.mse.to_string(), f.errors.me.to_string()])?;
        }
        let ds = load_dataset(cfg, &table, c)?;
        let scatter_path = dir.join(format!("formula_scatter_{c}.csv"));
        let mut w = csv::Writer::from_writer(create(&scatter_path)?);
        let mut header = vec!["pair".to_string(), "phase".into(), "m".into(), "y_true".into()];
        header.extend(formulas.iter().map(|f| format!("y_pred_k{}", f.k)));
        w.write_record(&header)?;
        let preds = formulas
            .iter()
            .map(|f| {
                let cols = f.terms.iter().map(|(l, _)| product_column(&ds, l)).collect::<Result<Vec<_>>>()?;
                let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
                let p = f.predict(&refs);
                Ok(if refs.is_empty() { vec![f.intercept; ds.len()] } else { p })
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, p) in ds.points.iter().enumerate() {
            let mut rec = vec![p.pair.pair_name(), p.pair.phase().to_string(), p.pair.m().to_string(), p.y.to_string()];
            rec.extend(preds.iter().map(|col| col[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        artifacts.push(scatter_path);
        formulas_by_cfg.insert(c.to_string(), formulas.iter().map(SparseFormula::render).collect());
    }
    mae.flush()?;
    artifacts.insert(0, mae_path);

    let yv_path = dir.join("young_vs_volume.csv");
    let mut w = csv::Writer::from_writer(create(&yv_path)?);
    w.write_record(["element", "phase", "V", "Y"])?;
    for ph in Phase::ALL {
        for e in Element::ALL {
            w.write_record([
                e.symbol().to_string(),
                ph.to_string(),
                table.get(e, ph, Property::V).to_string(),
                table.get(e, ph, Property::Y).to_string(),
            ])?;
        }
    }
    w.flush()?;
    artifacts.push(yv_path);

    let mut krr_best = BTreeMap::new();
    for &c in &cfg.krr.configurations {
        krr_best.insert(c.to_string(), read_json::<Vec<BestModel>>(&krr_dir(out, c).join("best.json"))?);
    }
    let rel = |p: &Path| p.strip_prefix(out).unwrap_or(p).to_path_buf();
    let mut by_stage: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for p in expected_inputs(cfg) {
        let stage = match p.strip_prefix(out).ok().and_then(|r| r.components().next()) {
            Some(s) if s.as_os_str() == "data" => "gen-data",
            Some(s) if s.as_os_str() == "sparsify" => "sparsify",
            _ if p.file_name().is_some_and(|f| f == "best.json") => "krr-scan",
            _ => "krr-fit",
        };
        by_stage.entry(stage.into()).or_default().push(rel(&p));
    }
    let report_path = dir.join("report.json");
    by_stage.insert("report".into(), artifacts.iter().map(|p| rel(p)).chain([rel(&report_path)]).collect());
    let report = RunReport { config_hash: cfg.hash()?, artifacts: by_stage, formulas: formulas_by_cfg, krr_best };
    write_json(&report_path, &report)?;
    artifacts.push(report_path);
    Ok(StageOutput { stage: "report".into(), artifacts })
}

/// Run one named stage, or all of them in order for `"all"`.
pub fn dispatch(cfg: &RunConfig, stage: &str) -> Result<Vec<StageOutput>> {
    let one = |name: &str| -> Result<StageOutput> {
        match name {
            "gen-data" => run_stage(cfg, name, cmd_gen_data),
            "krr-scan" => run_stage(cfg, name, cmd_krr_scan),
            "krr-fit" => run_stage(cfg, name, cmd_krr_fit),
            "sparsify" => run_stage(cfg, name, cmd_sparsify),
            "report" => run_stage(cfg, name, cmd_report),
            _ => Err(Error::invalid(format!("unknown stage `{name}`"))),
        }
    };
    if stage == "all" {
        STAGES.iter().map(|s| one(s)).collect()
    } else {
        Ok(vec![one(stage)?])
    }
}

/// Process exit code for an outcome: 0 ok, 1 validation, 2 runtime failure.
pub fn exit_code<T>(r: &Result<T>) -> i32 {
    match r {
        Ok(_) => 0,
        Err(e) if e.is_validation() => 1,
        Err(_) => 2,
    }
}
