//! Initial-data generation shared by all fidelities: deterministic base
//! profiles, multiplicative KL randomization of the species densities, and
//! reconstruction of kinetic distributions as local Maxwellians with the
//! prescribed density and bulk velocity.
//!
//! The KL decomposition is computed once on the high-fidelity grid; coarser
//! grids receive the eigenvectors by nodal injection (the meshes are nested),
//! so every fidelity sees the same realization of the random field.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kinetic::shifted_maxwellian;
use crate::kl::{assemble_covariance, kl_decompose, KLField};
use crate::params::ModelParams;
use crate::spectral::Spectral;
use crate::state::{AcousticState, FluidState, KineticState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProfileKind {
    /// Uniform densities 1, everything at rest.
    Equilibrium,
    /// Volcano-shaped densities with a cellular bulk-velocity field.
    Volcano,
    /// Densities `1 + delta * (KL perturbation)`, velocities of size delta.
    NearEquilibrium,
    /// Uniform densities with a constant bulk and fluid velocity.
    UniformBulk { speed: f64 },
    /// Volcano densities drifting with a constant bulk and fluid velocity.
    VolcanoDrift { speed: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub profile: ProfileKind,
    /// KL amplitude; 0 disables randomization entirely.
    pub sigma: f64,
    /// KL correlation length.
    pub ell: f64,
    /// Retained-spectrum threshold for the KL truncation.
    pub fraction: f64,
    /// Periodic covariance metric (flag off = plain Euclidean distance).
    pub periodic_covariance: bool,
}

impl Default for InitialDataSpec {
    fn default() -> Self {
        InitialDataSpec {
            profile: ProfileKind::Volcano,
            sigma: 0.1,
            ell: 0.08,
            fraction: 0.95,
            periodic_covariance: true,
        }
    }
}

/// Macroscopic initial fields on some (possibly coarsened) grid.
pub struct MacroFields {
    pub n: Vec<Array1<f64>>,
    /// Bulk velocity of every species, `(n_space, dim)`.
    pub up: Vec<Array2<f64>>,
    /// Fluid velocity, `(n_space, dim)`, not yet projected.
    pub u: Array2<f64>,
    /// Transverse (shear) velocity profile, when the profile defines one.
    pub transverse: Option<Array1<f64>>,
    /// Number of density nodes clamped at the positivity floor.
    pub clamped: usize,
}

/// Initial-data generator: profile spec plus the KL field decomposed on the
/// high-fidelity grid.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub spec: InitialDataSpec,
    pub kl: KLField,
    hi_grid: Grid,
}

impl InitialData {
    pub fn new(spec: InitialDataSpec, hi_grid: &Grid) -> Result<InitialData> {
        let cov = assemble_covariance(hi_grid, spec.ell, spec.periodic_covariance)?;
        let kl = kl_decompose(&cov, hi_grid, spec.ell, spec.sigma, spec.fraction)?;
        Ok(InitialData { spec, kl, hi_grid: hi_grid.clone() })
    }

    /// Dimension of the parameter vector: one KL block per species.
    pub fn z_dim(&self, params: &ModelParams) -> usize {
        if self.spec.sigma == 0.0 {
            // deterministic data still accepts (and ignores) any z
            0
        } else {
            self.kl.n_modes * params.n_species
        }
    }

    /// KL perturbation factor for one species on a nested target grid.
    fn perturbation(&self, z: &[f64], species: usize, grid: &Grid, params: &ModelParams) -> Result<(Array1<f64>, usize)> {
        if self.spec.sigma == 0.0 || z.is_empty() {
            return Ok((Array1::from_elem(grid.n_space(), 1.0), 0));
        }
        let expect = self.z_dim(params);
        if z.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has {} entries, expected {expect}",
                z.len()
            )));
        }
        let block = &z[(species - 1) * self.kl.n_modes..species * self.kl.n_modes];
        let (field_hi, clamped) = self.kl.sample_field(block)?;
        if grid.n_x == self.hi_grid.n_x {
            return Ok((field_hi, clamped));
        }
        // nodal injection onto the coarser nested grid
        let factor = self.hi_grid.refinement_factor(grid)?;
        let ns = grid.n_space();
        let mut field = Array1::zeros(ns);
        for a in 0..ns {
            let idx: Vec<usize> = grid.x_multi_index(a).iter().map(|i| i * factor).collect();
            field[a] = field_hi[self.hi_grid.x_flat_index(&idx)];
        }
        Ok((field, clamped))
    }

    /// Deterministic base profiles on the target grid.
    fn base_profiles(&self, params: &ModelParams, grid: &Grid) -> MacroFields {
        let ns = grid.n_space();
        let dim = grid.dim;
        let pi = std::f64::consts::PI;
        let mut n: Vec<Array1<f64>> = (0..params.n_species).map(|_| Array1::zeros(ns)).collect();
        let mut u = Array2::zeros((ns, dim));
        let mut transverse = None;

        let volcano = |offset: f64, a: usize| -> f64 {
            let mut r2 = 0.0;
            for d in 0..dim {
                let xd = grid.x_coord(a, d) - 0.5;
                r2 += xd * xd;
            }
            (offset + 100.0 * r2) * (-40.0 * r2).exp()
        };

        match self.spec.profile {
            ProfileKind::Equilibrium => {
                for ni in n.iter_mut() {
                    ni.fill(1.0);
                }
            }
            ProfileKind::Volcano | ProfileKind::VolcanoDrift { .. } => {
                for (s, ni) in n.iter_mut().enumerate() {
                    // species offsets 0.4, 0.5, 0.6, ...
                    let offset = 0.4 + 0.1 * s as f64;
                    for a in 0..ns {
                        ni[a] = volcano(offset, a);
                    }
                }
                match self.spec.profile {
                    ProfileKind::VolcanoDrift { speed } => {
                        for a in 0..ns {
                            u[(a, 0)] = speed;
                        }
                    }
                    _ => {
                        for a in 0..ns {
                            let x = grid.x_coord(a, 0);
                            if dim == 1 {
                                u[(a, 0)] = (pi * x).sin().powi(2);
                            } else {
                                let y = grid.x_coord(a, 1);
                                u[(a, 0)] = (pi * x).sin().powi(2) * (2.0 * pi * y).sin();
                                u[(a, 1)] = -(pi * y).sin().powi(2) * (2.0 * pi * x).sin();
                            }
                        }
                    }
                }
            }
            ProfileKind::NearEquilibrium => {
                let delta = params.delta;
                for ni in n.iter_mut() {
                    ni.fill(1.0);
                }
                if dim == 1 {
                    let mut t = Array1::zeros(ns);
                    for a in 0..ns {
                        let x = grid.x_coord(a, 0);
                        u[(a, 0)] = 0.5 * delta;
                        t[a] = delta * (2.0 * pi * x).sin();
                    }
                    transverse = Some(t);
                } else {
                    for a in 0..ns {
                        let x = grid.x_coord(a, 0);
                        let y = grid.x_coord(a, 1);
                        u[(a, 0)] = delta * (2.0 * pi * y).sin();
                        u[(a, 1)] = delta * (2.0 * pi * x).sin();
                    }
                }
            }
            ProfileKind::UniformBulk { speed } => {
                for ni in n.iter_mut() {
                    ni.fill(1.0);
                }
                for a in 0..ns {
                    u[(a, 0)] = speed;
                }
            }
        }
        // near-equilibrium data perturbs the fluid only: particles start at
        // their equilibrium rest velocity and are dragged along by the flow
        let up = if matches!(self.spec.profile, ProfileKind::NearEquilibrium) {
            vec![Array2::zeros((ns, dim)); params.n_species]
        } else {
            vec![u.clone(); params.n_species]
        };
        MacroFields { n, up, u, transverse, clamped: 0 }
    }

    /// Randomized macroscopic fields on a nested target grid.
    pub fn macro_fields(&self, z: &[f64], params: &ModelParams, grid: &Grid) -> Result<MacroFields> {
        let mut fields = self.base_profiles(params, grid);
        for s in 1..=params.n_species {
            let (pert, clamped) = self.perturbation(z, s, grid, params)?;
            fields.clamped += clamped;
            match self.spec.profile {
                // near-equilibrium randomization stays O(delta * sigma)
                ProfileKind::NearEquilibrium => {
                    let delta = params.delta;
                    for (ni, p) in fields.n[s - 1].iter_mut().zip(pert.iter()) {
                        *ni += delta * (p - 1.0);
                    }
                }
                _ => {
                    for (ni, p) in fields.n[s - 1].iter_mut().zip(pert.iter()) {
                        *ni *= p;
                    }
                }
            }
            // the multiplicative clamp can still leave tiny negatives in the
            // additive branch; floor them too
            for ni in fields.n[s - 1].iter_mut() {
                if *ni < 1e-8 {
                    *ni = 1e-8;
                    fields.clamped += 1;
                }
            }
        }
        Ok(fields)
    }

    /// Kinetic initial state: `F_i = n_i(x) M_i(v - u_p,i(x))` with the
    /// normalized Gaussian of variance `theta/i`, fluid velocity projected to
    /// divergence-free. Returns the clamp count alongside.
    pub fn build_kinetic(
        &self,
        z: &[f64],
        params: &ModelParams,
        grid: &Grid,
    ) -> Result<(KineticState, usize)> {
        let fields = self.macro_fields(z, params, grid)?;
        let ns = grid.n_space();
        let nv = grid.n_vel();
        let mut f = Vec::with_capacity(params.n_species);
        for s in 1..=params.n_species {
            let mut fi = Array2::zeros((ns, nv));
            for a in 0..ns {
                let mean: Vec<f64> = (0..grid.dim).map(|d| fields.up[s - 1][(a, d)]).collect();
                let m = shifted_maxwellian(s, &mean, params, grid);
                let dens = fields.n[s - 1][a];
                for j in 0..nv {
                    fi[(a, j)] = dens * m[j];
                }
            }
            f.push(fi);
        }
        let mut u = fields.u;
        let spectral = Spectral::new(grid);
        spectral.project(&mut u, None);
        let state = KineticState { f, u, p: Array1::zeros(ns), t: 0.0 };
        Ok((state, fields.clamped))
    }

    /// Hydrodynamic initial state on the target grid; `transverse` keeps the
    /// shear column when the profile defines one.
    pub fn build_fluid(
        &self,
        z: &[f64],
        params: &ModelParams,
        grid: &Grid,
        transverse: bool,
    ) -> Result<(FluidState, usize)> {
        let fields = self.macro_fields(z, params, grid)?;
        let ns = grid.n_space();
        let dim = grid.dim;
        let ncols = dim + usize::from(transverse);
        let mut u = Array2::zeros((ns, ncols));
        for a in 0..ns {
            for d in 0..dim {
                u[(a, d)] = fields.u[(a, d)];
            }
        }
        if transverse {
            if let Some(t) = &fields.transverse {
                for a in 0..ns {
                    u[(a, dim)] = t[a];
                }
            }
        }
        let spectral = Spectral::new(grid);
        let mut coords = u.slice_mut(ndarray::s![.., ..dim]).to_owned();
        spectral.project(&mut coords, None);
        for a in 0..ns {
            for d in 0..dim {
                u[(a, d)] = coords[(a, d)];
            }
        }
        let state = FluidState { n: fields.n, u, p: Array1::zeros(ns), t: 0.0 };
        Ok((state, fields.clamped))
    }

    /// Linearized (acoustic) initial state: the same data expressed as
    /// perturbations, `n~ = (n - 1)/delta`, `u~ = u/delta`.
    pub fn build_acoustic(
        &self,
        z: &[f64],
        params: &ModelParams,
        grid: &Grid,
        transverse: bool,
    ) -> Result<(AcousticState, usize)> {
        let (fluid, clamped) = self.build_fluid(z, params, grid, transverse)?;
        let delta = params.delta;
        let state = AcousticState {
            n_tilde: fluid.n.iter().map(|n| n.mapv(|x| (x - 1.0) / delta)).collect(),
            u_tilde: fluid.u.mapv(|x| x / delta),
            p_tilde: Array1::zeros(grid.n_space()),
            t: 0.0,
        };
        Ok((state, clamped))
    }
}
