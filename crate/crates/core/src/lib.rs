//! Sparse-regression pipeline for the excess enthalpy of mixing of binary
//! lanthanide phosphate solid solutions.
//!
//! The crate goes from tabulated elemental properties to closed-form
//! formulas in three stages:
//!
//! 1. kernel ridge regression over descriptor vectors ([`krr`]) to judge
//!    which model class fits,
//! 2. polynomial expansion of a knowledge-constrained descriptor space
//!    ([`features`]),
//! 3. LASSO coordinate descent followed by exhaustive best-subset search
//!    ([`sparsify`]).
//!
//! Training targets come from a planted-formula generator ([`dataset`]).

pub mod cli;
pub mod config;
pub mod dataset;
pub mod descriptors;
pub mod elementals;
pub mod error;
pub mod features;
pub mod kernels;
pub mod krr;
pub mod linalg;
pub mod rng;
pub mod sparsify;

pub use dataset::{Configuration, DataSet, PlantedModel, SplitPlan};
pub use descriptors::{DescriptorScheme, DescriptorVector, MixPair, SchemeFamily};
pub use elementals::{Element, ElementalTable, Phase, Property};
pub use error::{Error, Result};
pub use features::FeatureMatrix;
pub use kernels::{KernelFamily, KernelSpec};
pub use krr::{ErrorReport, GridSpec, KrrModel};
pub use sparsify::{LassoResult, PathReport, PipelineOptions, SparseFormula};
pub use config::RunConfig;
