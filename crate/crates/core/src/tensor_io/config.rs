//! JSON pipeline configuration with defaults and strict validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully-resolved pipeline parameters. Every field has a default; a config
/// document may override any subset and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Sparsity weight for both coding and learning.
    pub lambda: f64,
    /// Initial ADMM penalty for the coding stage; defaults to `10*lambda + 0.1`.
    pub rho0: f64,
    pub adapt_rho: bool,
    /// Residual-ratio threshold for penalty adaptation.
    pub mu: f64,
    /// Penalty adaptation factor.
    pub tau: f64,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Initial dictionary atom count.
    pub atoms: usize,
    /// Square atom support, odd.
    pub atom_size: usize,
    /// Training patch count.
    pub patches: usize,
    pub patch_size: usize,
    pub tikhonov_lambda: f64,
    pub seed: u64,
    /// HU clip window applied before rescaling to [0, 1].
    pub clip_hu: [f64; 2],
    pub outer_iters: usize,
    /// Initial ADMM penalty for the dictionary-update stage.
    pub sigma0: f64,
    pub min_airway_voxels: usize,
    pub add_lowpass: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let lambda = 0.2;
        Self {
            lambda,
            rho0: 10.0 * lambda + 0.1,
            adapt_rho: true,
            mu: 10.0,
            tau: 2.0,
            max_iter: 500,
            eps_abs: 1e-5,
            eps_rel: 1e-4,
            atoms: 36,
            atom_size: 5,
            patches: 50,
            patch_size: 64,
            tikhonov_lambda: 5.0,
            seed: 0,
            clip_hu: [-1000.0, 600.0],
            outer_iters: 200,
            sigma0: 1.0,
            min_airway_voxels: 1,
            add_lowpass: false,
        }
    }
}

/// Raw document shape: everything optional, unknown keys fatal.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    lambda: Option<f64>,
    rho0: Option<f64>,
    adapt_rho: Option<bool>,
    mu: Option<f64>,
    tau: Option<f64>,
    max_iter: Option<usize>,
    eps_abs: Option<f64>,
    eps_rel: Option<f64>,
    atoms: Option<usize>,
    atom_size: Option<usize>,
    patches: Option<usize>,
    patch_size: Option<usize>,
    tikhonov_lambda: Option<f64>,
    seed: Option<u64>,
    clip_hu: Option<[f64; 2]>,
    outer_iters: Option<usize>,
    sigma0: Option<f64>,
    min_airway_voxels: Option<usize>,
    add_lowpass: Option<bool>,
}

fn require(cond: bool, key: &str, requirement: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must be {requirement}")))
    }
}

impl PipelineConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        if let Some(lambda) = raw.lambda {
            cfg.lambda = lambda;
            // Keep the derived default in sync unless rho0 is set explicitly.
            cfg.rho0 = 10.0 * lambda + 0.1;
        }
        if let Some(rho0) = raw.rho0 {
            cfg.rho0 = rho0;
        }
        if let Some(v) = raw.adapt_rho {
            cfg.adapt_rho = v;
        }
        if let Some(v) = raw.mu {
            cfg.mu = v;
        }
        if let Some(v) = raw.tau {
            cfg.tau = v;
        }
        if let Some(v) = raw.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = raw.eps_abs {
            cfg.eps_abs = v;
        }
        if let Some(v) = raw.eps_rel {
            cfg.eps_rel = v;
        }
        if let Some(v) = raw.atoms {
            cfg.atoms = v;
        }
        if let Some(v) = raw.atom_size {
            cfg.atom_size = v;
        }
        if let Some(v) = raw.patches {
            cfg.patches = v;
        }
        if let Some(v) = raw.patch_size {
            cfg.patch_size = v;
        }
        if let Some(v) = raw.tikhonov_lambda {
            cfg.tikhonov_lambda = v;
        }
        if let Some(v) = raw.seed {
            cfg.seed = v;
        }
        if let Some(v) = raw.clip_hu {
            cfg.clip_hu = v;
        }
        if let Some(v) = raw.outer_iters {
            cfg.outer_iters = v;
        }
        if let Some(v) = raw.sigma0 {
            cfg.sigma0 = v;
        }
        if let Some(v) = raw.min_airway_voxels {
            cfg.min_airway_voxels = v;
        }
        if let Some(v) = raw.add_lowpass {
            cfg.add_lowpass = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.lambda > 0.0 && self.lambda.is_finite(), "lambda", "> 0")?;
        require(self.rho0 > 0.0 && self.rho0.is_finite(), "rho0", "> 0")?;
        require(self.mu > 1.0 && self.mu.is_finite(), "mu", "> 1")?;
        require(self.tau > 1.0 && self.tau.is_finite(), "tau", "> 1")?;
        require(self.max_iter > 0, "max_iter", "> 0")?;
        require(self.eps_abs >= 0.0 && self.eps_abs.is_finite(), "eps_abs", ">= 0")?;
        require(self.eps_rel >= 0.0 && self.eps_rel.is_finite(), "eps_rel", ">= 0")?;
        require(self.atoms > 0, "atoms", "> 0")?;
        require(self.atom_size > 0 && self.atom_size % 2 == 1, "atom_size", "a positive odd integer")?;
        require(self.patches > 0, "patches", "> 0")?;
        require(self.patch_size > 0, "patch_size", "> 0")?;
        require(
            self.tikhonov_lambda >= 0.0 && self.tikhonov_lambda.is_finite(),
            "tikhonov_lambda",
            ">= 0",
        )?;
        require(
            self.clip_hu[0] < self.clip_hu[1]
                && self.clip_hu.iter().all(|v| v.is_finite()),
            "clip_hu",
            "a finite [lo, hi] window with lo < hi",
        )?;
        require(self.outer_iters > 0, "outer_iters", "> 0")?;
        require(self.sigma0 > 0.0 && self.sigma0.is_finite(), "sigma0", "> 0")?;
        require(self.min_airway_voxels >= 1, "min_airway_voxels", ">= 1")?;
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn read_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    PipelineConfig::from_json_str(&text)
}

pub fn write_config(path: &Path, config: &PipelineConfig) -> Result<()> {
    config.validate()?;
    std::fs::write(path, config.to_json_string()).map_err(Error::io(path))
}
