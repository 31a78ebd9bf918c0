//! Run configuration: one TOML file describes model parameters, grids, the
//! low-fidelity model, the random-input settings, sweep sizes, and output
//! paths. A hash of the canonical serialization is embedded in every
//! artifact so results can be traced back to the exact configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bifidelity::ProjectionMode;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec};
use crate::initial::InitialDataSpec;
use crate::lofi::LoFiKind;
use crate::params::ModelParams;
use crate::persist::sha256_str;
use crate::samples::SampleDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Physical model parameters.
    pub model: ModelParams,
    /// High-fidelity grid; the low-fidelity grid is derived from it via
    /// `lofi`.
    pub hi_grid: GridSpec,
    /// Low-fidelity model choice.
    pub lofi: LoFiKind,
    /// Random initial-data settings (profile, KL parameters).
    pub initial: InitialDataSpec,
    /// Distribution of the KL coefficients.
    pub distribution: SampleDistribution,
    /// Base RNG seed; training and evaluation use disjoint sub-streams.
    pub seed: u64,
    /// Number of low-fidelity candidate runs.
    pub m: usize,
    /// Number of selected collocation nodes (= high-fidelity runs).
    pub k: usize,
    /// Held-out evaluation sample count.
    pub m_eval: usize,
    /// Node counts swept by the convergence study.
    pub k_sweep: Vec<usize>,
    /// Final integration time.
    pub t_final: f64,
    /// CFL number for explicit stages.
    pub cfl: f64,
    /// Checkpoint cadence in steps (0 = final state only).
    pub checkpoint_every: usize,
    /// Projection mode for the online coefficient solve.
    pub projection: ProjectionMode,
    /// Artifact directory.
    pub output_dir: PathBuf,
    /// Worker threads for sample sweeps (0 = all available cores).
    pub workers: usize,
}

impl Default for RunConfig {
    /// Desk-scale defaults: 1D, 64-point fine mesh, 4x coarsened kinetic
    /// low-fidelity model, 2 species, 200 candidates, 10 nodes, 100
    /// evaluation samples, final time 0.1.
    fn default() -> Self {
        RunConfig {
            model: ModelParams::default(),
            hi_grid: GridSpec { dim: 1, x_len: vec![1.0], n_x: vec![64], l_v: 8.0, n_v: 32 },
            lofi: LoFiKind::CoarseKinetic(4),
            initial: InitialDataSpec::default(),
            distribution: SampleDistribution::StandardNormal,
            seed: 2024,
            m: 200,
            k: 10,
            m_eval: 100,
            k_sweep: vec![2, 4, 6, 8, 10],
            t_final: 0.1,
            cfl: 0.5,
            checkpoint_every: 0,
            projection: ProjectionMode::PerComponent,
            output_dir: PathBuf::from("out"),
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.hi_grid.dim != self.model.dim {
            return Err(Error::Config(format!(
                "grid dimension {} disagrees with model dimension {}",
                self.hi_grid.dim, self.model.dim
            )));
        }
        let hi = Grid::from_spec(&self.hi_grid).map_err(|e| Error::Config(e.to_string()))?;
        self.lofi.grid(&hi).map_err(|e| Error::Config(e.to_string()))?;
        if self.k > self.m {
            return Err(Error::Config(format!(
                "selection size k = {} exceeds candidate count m = {}",
                self.k, self.m
            )));
        }
        if self.m == 0 {
            return Err(Error::Config("candidate count m must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("selection size k must be >= 1".into()));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config(format!("t_final must be > 0, got {}", self.t_final)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must be in (0, 1], got {}", self.cfl)));
        }
        if self.k_sweep.iter().any(|&k| k == 0 || k > self.m) {
            return Err(Error::Config("k_sweep entries must lie in [1, m]".into()));
        }
        if !(self.initial.sigma >= 0.0) || !(self.initial.ell > 0.0) {
            return Err(Error::Config("initial data needs sigma >= 0 and ell > 0".into()));
        }
        if !(0.0 < self.initial.fraction && self.initial.fraction <= 1.0) {
            return Err(Error::Config("spectrum fraction must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// High-fidelity grid object.
    pub fn hi_grid(&self) -> Result<Grid> {
        Grid::from_spec(&self.hi_grid)
    }

    /// Low-fidelity grid object.
    pub fn lo_grid(&self) -> Result<Grid> {
        self.lofi.grid(&self.hi_grid()?)
    }

    /// Stable hash of the canonical serialization; embedded in artifacts.
    /// Excludes the output directory and worker count, which do not affect
    /// numerical content.
    pub fn content_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.workers = 0;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        sha256_str(&json)
    }
}
