//! Run configuration: one TOML file describing every stage.
//!
//! ```toml
//! [paths]
//! elementals = "data/lanthanides.csv"   # optional, bundled table otherwise
//! out_dir = "out"
//!
//! [seeds]
//! data = 0      # synthetic noise
//! split = 0     # train/test partition for the KRR scan
//! cv = 0        # cross-validation folds
//!
//! [dataset]
//! configurations = ["monazite", "xenotime", "fused"]
//! ratios = [0.25, 0.375, 0.5, 0.625, 0.75]
//! # external_csv = "my_data.csv"       # replaces the synthetic generator
//!
//! [dataset.model]
//! noise_relative = 0.01                 # or noise_sigma = 0.05
//! terms = [
//!   { term = "m*(1-m)*diff(V)^2", coefficient = 1.1453 },
//!   { term = "diff(Y)*diff(V)*inv(mean(V)^2)", coefficient = 108.1079 },
//! ]
//!
//! [scheme]                              # descriptors for the planted model and sparsification
//! family = "prior_knowledge"
//! properties = ["Z", "m", "R", "IP2", "IP3", "chi", "Y", "Zeff", "V"]
//! include_inverses = true
//! inverse_exclude = ["chi"]
//! m_powers = [1, 2]
//! v_powers = [2, 3]
//! r_powers = [2, 3]
//!
//! [krr]
//! configurations = ["fused"]
//! families = ["poly2", "poly3", "gaussian", "laplacian"]
//! split_ratio = 0.8
//! standardize = true
//! cv_folds = 5
//! overfit_threshold = 10.0
//!
//! [krr.grid]
//! log_lambda = { lo = -20.0, hi = 6.0, steps = 21 }
//! log_gamma = { lo = -8.0, hi = 8.0, steps = 17 }
//! log_c = { lo = -2.0, hi = 2.0, steps = 5 }
//! refinement_rounds = 2
//!
//! [sparsify]
//! max_degree = 3
//! lambda_lo = 0.001
//! lambda_step = 0.005
//! lambda_hi = 0.096
//! penalty_scale = "normalized"
//! support_cap = 30
//! k_max = 5
//! ```
//!
//! Every section and key is optional; missing keys take the values shown.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{enumerate_configuration, Configuration, PlantedModel, PlantedTerm, DEFAULT_RATIOS};
use crate::descriptors::DescriptorScheme;
use crate::elementals::ElementalTable;
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::krr::{GridSpec, DEFAULT_OVERFIT_THRESHOLD};
use crate::sparsify::PipelineOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub elementals: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { elementals: None, out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub data: u64,
    pub split: u64,
    pub cv: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self { data: seed, split: seed, cv: seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub terms: Vec<PlantedTerm>,
    pub noise_sigma: Option<f64>,
    pub noise_relative: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let m = PlantedModel::two_term();
        Self { terms: m.terms, noise_sigma: m.noise_sigma, noise_relative: m.noise_relative }
    }
}

impl ModelConfig {
    pub fn planted(&self, seed: u64) -> PlantedModel {
        PlantedModel {
            terms: self.terms.clone(),
            noise_sigma: self.noise_sigma,
            noise_relative: self.noise_relative,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub configurations: Vec<Configuration>,
    pub ratios: Vec<f64>,
    pub model: ModelConfig,
    /// Targets read from this CSV instead of the generator; only valid with
    /// a single configuration.
    pub external_csv: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            configurations: Configuration::ALL.to_vec(),
            ratios: DEFAULT_RATIOS.to_vec(),
            model: ModelConfig::default(),
            external_csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrrConfig {
    pub configurations: Vec<Configuration>,
    pub families: Vec<String>,
    /// Descriptors fed to the kernels.
    pub descriptors: DescriptorScheme,
    pub grid: GridSpec,
    pub split_ratio: f64,
    pub standardize: bool,
    pub cv_folds: usize,
    pub overfit_threshold: f64,
}

impl Default for KrrConfig {
    fn default() -> Self {
        Self {
            configurations: vec![Configuration::Fused],
            families: ["poly2", "poly3", "gaussian", "laplacian"].map(String::from).to_vec(),
            descriptors: DescriptorScheme::krr_original(),
            grid: GridSpec::default(),
            split_ratio: 0.8,
            standardize: true,
            cv_folds: 5,
            overfit_threshold: DEFAULT_OVERFIT_THRESHOLD,
        }
    }
}

impl KrrConfig {
    pub fn kernel_families(&self) -> Result<Vec<KernelFamily>> {
        self.families
            .iter()
            .map(|f| f.parse().map_err(|e: Error| Error::config("krr.families", e.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub seeds: Seeds,
    pub dataset: DatasetConfig,
    pub scheme: DescriptorScheme,
    pub krr: KrrConfig,
    pub sparsify: PipelineOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            seeds: Seeds::default(),
            dataset: DatasetConfig::default(),
            scheme: DescriptorScheme::prior_knowledge(),
            krr: KrrConfig::default(),
            sparsify: PipelineOptions::default(),
        }
    }
}

fn ensure_file(field: &str, p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::config(field, format!("file {} does not exist", p.display())))
    }
}

fn nonempty_unique(field: &str, cs: &[Configuration]) -> Result<()> {
    if cs.is_empty() {
        return Err(Error::config(field, "at least one configuration is required"));
    }
    for (i, c) in cs.iter().enumerate() {
        if cs[..i].contains(c) {
            return Err(Error::config(field, format!("`{c}` is listed twice")));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string() + &span_hint(text, e.span())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config { msg, .. } => Error::config(path.display().to_string(), msg),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes to TOML")
    }

    pub fn table(&self) -> Result<ElementalTable> {
        match &self.paths.elementals {
            Some(p) => ElementalTable::load(p),
            None => Ok(ElementalTable::bundled()),
        }
    }

    /// Check every field, reporting the first offending key.
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.paths.elementals {
            ensure_file("paths.elementals", p)?;
        }
        if self.paths.out_dir.as_os_str().is_empty() {
            return Err(Error::config("paths.out_dir", "must not be empty"));
        }
        let table = self.table().map_err(|e| Error::config("paths.elementals", e.to_string()))?;

        let ds = &self.dataset;
        nonempty_unique("dataset.configurations", &ds.configurations)?;
        if ds.ratios.is_empty() {
            return Err(Error::config("dataset.ratios", "at least one ratio is required"));
        }
        for (i, &r) in ds.ratios.iter().enumerate() {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::config("dataset.ratios", format!("{r} is outside (0, 1)")));
            }
            if ds.ratios[..i].contains(&r) {
                return Err(Error::config("dataset.ratios", format!("{r} is listed twice")));
            }
        }
        if let Some(p) = &ds.external_csv {
            ensure_file("dataset.external_csv", p)?;
            if ds.configurations.len() != 1 {
                return Err(Error::config("dataset.configurations", "an external CSV needs exactly one configuration"));
            }
        }

        self.scheme.validate().map_err(|e| Error::config("scheme", e.to_string()))?;
        if ds.external_csv.is_none() {
            let model = ds.model.planted(self.seeds.data);
            model.validate().map_err(|e| match e {
                Error::Config { field, msg } => Error::config(format!("dataset.{field}"), msg),
                e => e,
            })?;
            let probe = enumerate_configuration(ds.configurations[0], &ds.ratios[..1])?;
            model
                .evaluate(&table, &self.scheme, &probe[..1])
                .map_err(|e| Error::config("dataset.model.terms", e.to_string()))?;
        }

        let k = &self.krr;
        nonempty_unique("krr.configurations", &k.configurations)?;
        for c in &k.configurations {
            if !ds.configurations.contains(c) {
                return Err(Error::config("krr.configurations", format!("`{c}` is not generated by dataset.configurations")));
            }
        }
        if k.kernel_families()?.is_empty() {
            return Err(Error::config("krr.families", "at least one kernel family is required"));
        }
        k.descriptors.validate().map_err(|e| Error::config("krr.descriptors", e.to_string()))?;
        k.grid.validate().map_err(|e| match e {
            Error::Config { field, msg } => Error::config(format!("krr.{field}"), msg),
            e => e,
        })?;
        if !(k.split_ratio > 0.0 && k.split_ratio < 1.0) {
            return Err(Error::config("krr.split_ratio", "must lie in (0, 1)"));
        }
        if k.cv_folds < 2 {
            return Err(Error::config("krr.cv_folds", "must be at least 2"));
        }
        if !(k.overfit_threshold > 1.0 && k.overfit_threshold.is_finite()) {
            return Err(Error::config("krr.overfit_threshold", "must be finite and > 1"));
        }

        self.sparsify.validate()
    }

    /// Hex SHA-256 of the canonical JSON form of every field that affects
    /// results. The output directory is excluded; the contents of a custom
    /// elemental table are included.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.paths.out_dir = PathBuf::new();
        let value = serde_json::to_value(&c)?;
        let mut h = Sha256::new();
        h.update(serde_json::to_string(&value)?.as_bytes());
        if let Some(p) = &self.paths.elementals {
            h.update(std::fs::read(p)?);
        }
        Ok(hex::encode(h.finalize()))
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}
