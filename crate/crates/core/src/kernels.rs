//! Polynomial, Gaussian and Laplacian kernels and Gram-matrix assembly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `(γ⟨x,z⟩ + c)^degree`
    Polynomial { degree: u32 },
    /// `exp(-γ‖x-z‖₂²)`, with `γ = 1/(2σ²)`
    Gaussian,
    /// `exp(-γ‖x-z‖₁)`
    Laplacian,
}

impl KernelFamily {
    pub fn name(&self) -> String {
        match self {
            KernelFamily::Polynomial { degree } => format!("poly{degree}"),
            KernelFamily::Gaussian => "gaussian".into(),
            KernelFamily::Laplacian => "laplacian".into(),
        }
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self, KernelFamily::Polynomial { .. })
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelFamily::Gaussian),
            "laplacian" => Ok(KernelFamily::Laplacian),
            _ => s
                .strip_prefix("poly")
                .and_then(|d| d.parse::<u32>().ok())
                .filter(|&d| d >= 1)
                .map(|degree| KernelFamily::Polynomial { degree })
                .ok_or_else(|| Error::invalid(format!("unknown kernel family `{s}` (poly<p>, gaussian, laplacian)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub gamma: f64,
    /// Offset of the polynomial kernel; zero otherwise.
    pub c: f64,
}

impl KernelSpec {
    pub fn polynomial(degree: u32, gamma: f64, c: f64) -> Result<Self> {
        Self::new(KernelFamily::Polynomial { degree }, gamma, c)
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, gamma, 0.0)
    }

    pub fn laplacian(gamma: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplacian, gamma, 0.0)
    }

    pub fn new(family: KernelFamily, gamma: f64, c: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("kernel gamma must be positive, got {gamma}")));
        }
        match family {
            KernelFamily::Polynomial { degree: 0 } => {
                return Err(Error::invalid("polynomial degree must be at least 1"))
            }
            KernelFamily::Polynomial { .. } => {
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(Error::invalid(format!("polynomial offset must be >= 0, got {c}")));
                }
            }
            _ => {
                if c != 0.0 {
                    return Err(Error::invalid("offset c only applies to the polynomial kernel"));
                }
            }
        }
        Ok(Self { family, gamma, c })
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Polynomial { degree } => {
                let d: f64 = x.iter().zip(z).map(|(a, b)| a * b).sum();
                (self.gamma * d + self.c).powi(degree as i32)
            }
            KernelFamily::Gaussian => {
                let s: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * s).exp()
            }
            KernelFamily::Laplacian => {
                let s: f64 = x.iter().zip(z).map(|(a, b)| (a - b).abs()).sum();
                (-self.gamma * s).exp()
            }
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::Dimension { expected: x.len(), got: z.len() });
    }
    Ok(spec.eval_unchecked(x, z))
}

/// Symmetric `N × N` kernel matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub n: usize,
    pub entries: Vec<f64>,
    pub spec: KernelSpec,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

fn check_rows<X: AsRef<[f64]>>(xs: &[X], dim: Option<usize>) -> Result<usize> {
    let d = match (dim, xs.first()) {
        (Some(d), _) => d,
        (None, Some(x)) => x.as_ref().len(),
        (None, None) => return Err(Error::invalid("no input vectors")),
    };
    for x in xs {
        if x.as_ref().len() != d {
            return Err(Error::Dimension { expected: d, got: x.as_ref().len() });
        }
    }
    Ok(d)
}

/// Upper triangle evaluated row-parallel, then mirrored for exact symmetry.
pub fn gram<X: AsRef<[f64]> + Sync>(spec: &KernelSpec, xs: &[X]) -> Result<GramMatrix> {
    check_rows(xs, None)?;
    let n = xs.len();
    let mut entries = vec![0.0; n * n];
    entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = xs[i].as_ref();
        for j in i..n {
            row[j] = spec.eval_unchecked(xi, xs[j].as_ref());
        }
    });
    for i in 0..n {
        for j in 0..i {
            entries[i * n + j] = entries[j * n + i];
        }
    }
    Ok(GramMatrix { n, entries, spec: *spec })
}

/// `K'[i][j] = k(train_i, new_j)`, returned row-major `N_train × N_new`.
pub fn cross_gram<X: AsRef<[f64]> + Sync, Z: AsRef<[f64]> + Sync>(
    spec: &KernelSpec,
    train: &[X],
    new: &[Z],
) -> Result<Vec<f64>> {
    let d = check_rows(train, None)?;
    check_rows(new, Some(d))?;
    let m = new.len();
    let mut out = vec![0.0; train.len() * m];
    if m == 0 {
        return Ok(out);
    }
    out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let xi = train[i].as_ref();
        for (j, z) in new.iter().enumerate() {
            row[j] = spec.eval_unchecked(xi, z.as_ref());
        }
    });
    Ok(out)
}
