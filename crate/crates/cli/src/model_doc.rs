//! JSON model documents.

use std::path::Path;

use ghmix::densities::{CghdComponent, Family, MixtureModel};
use ghmix::inference::{FitResult, Scaling};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDoc {
    pub mu: Vec<f64>,
    /// Row-major `p x p`.
    pub gamma: Vec<f64>,
    pub phi: Vec<f64>,
    pub beta: Vec<f64>,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
    pub omega0: f64,
    pub lambda0: f64,
    pub varpi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub loglik: f64,
    pub bic: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingDoc {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub family: String,
    #[serde(rename = "G")]
    pub g: usize,
    pub columns: Vec<String>,
    pub pi: Vec<f64>,
    pub components: Vec<ComponentDoc>,
    pub metadata: FitMetadata,
    /// Present when the columns were standardized before fitting; the model
    /// parameters then refer to the standardized columns.
    pub scaling: Option<ScalingDoc>,
}

impl ModelDocument {
    pub fn from_fit(fit: &FitResult, columns: &[String], seed: u64, n: usize) -> Self {
        let m = &fit.model;
        let components = m
            .components
            .iter()
            .map(|c| {
                let p = c.dim();
                ComponentDoc {
                    mu: c.mu.iter().copied().collect(),
                    gamma: (0..p * p).map(|k| c.gamma[(k / p, k % p)]).collect(),
                    phi: c.phi.iter().copied().collect(),
                    beta: c.beta.iter().copied().collect(),
                    omega: c.omega.iter().copied().collect(),
                    lambda: c.lambda.iter().copied().collect(),
                    omega0: c.omega0,
                    lambda0: c.lambda0,
                    varpi: c.varpi,
                }
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            family: m.family.name().into(),
            g: m.g(),
            columns: columns.to_vec(),
            pi: m.pi.clone(),
            components,
            metadata: FitMetadata {
                seed,
                iterations: fit.n_iter,
                converged: fit.converged,
                loglik: fit.loglik(),
                bic: fit.bic,
                n,
            },
            scaling: fit.scaling.as_ref().map(|s| ScalingDoc {
                mean: s.mean.clone(),
                sd: s.sd.clone(),
            }),
        }
    }

    pub fn model(&self) -> CliResult<MixtureModel> {
        let bad = |msg: String| CliError::input(format!("model document: {msg}"));
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema_version {}", self.schema_version)));
        }
        if self.components.len() != self.g {
            return Err(bad(format!("G is {} but {} components are listed", self.g, self.components.len())));
        }
        let family = Family::parse(&self.family).map_err(|e| bad(e.to_string()))?;
        let p = self.columns.len();
        let mut comps = Vec::with_capacity(self.g);
        for (k, c) in self.components.iter().enumerate() {
            let lens = [c.mu.len(), c.phi.len(), c.beta.len(), c.omega.len(), c.lambda.len()];
            if lens.iter().any(|l| *l != p) || c.gamma.len() != p * p {
                return Err(bad(format!("component {} has vectors of the wrong length for p = {p}", k + 1)));
            }
            comps.push(CghdComponent {
                mu: DVector::from_vec(c.mu.clone()),
                gamma: DMatrix::from_row_slice(p, p, &c.gamma),
                phi: DVector::from_vec(c.phi.clone()),
                beta: DVector::from_vec(c.beta.clone()),
                omega: DVector::from_vec(c.omega.clone()),
                lambda: DVector::from_vec(c.lambda.clone()),
                omega0: c.omega0,
                lambda0: c.lambda0,
                varpi: c.varpi,
            });
        }
        MixtureModel::new(family, self.pi.clone(), comps).map_err(|e| bad(e.to_string()))
    }

    pub fn scaling(&self) -> Option<Scaling> {
        self.scaling.as_ref().map(|s| Scaling {
            mean: s.mean.clone(),
            sd: s.sd.clone(),
        })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Numeric(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::input(format!("writing {}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}
