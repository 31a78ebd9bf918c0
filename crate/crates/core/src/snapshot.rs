//! Snapshot algebra: the fidelity-tagged, quadrature-weighted field vectors
//! that the bi-fidelity machinery operates on.
//!
//! A snapshot stores, component-major, the moment pair (`rho`, `mom`) =
//! `(sum_i i n_i, sum_i J_i)` plus the per-species densities `n_i`, bulk
//! velocities `up_i` and the fluid velocity `u`. Every fidelity produces the
//! same layout so Gramians, projections and error metrics are
//! fidelity-agnostic.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec};
use crate::kinetic::moments;
use crate::params::ModelParams;
use crate::state::{AcousticState, FluidState, KineticState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fidelity {
    High,
    Low,
    BiFi,
}

/// Component names with their number of scalar fields, plus the grid they
/// live on. Two snapshots interoperate only if their layouts are equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotLayout {
    pub components: Vec<(String, usize)>,
    pub grid: GridSpec,
}

impl SnapshotLayout {
    pub fn for_model(params: &ModelParams, grid: &Grid) -> SnapshotLayout {
        let dim = grid.dim;
        let mut components = vec![("rho".to_string(), 1), ("mom".to_string(), dim)];
        for s in 1..=params.n_species {
            components.push((format!("n_{s}"), 1));
        }
        for s in 1..=params.n_species {
            components.push((format!("up_{s}"), dim));
        }
        components.push(("u".to_string(), dim));
        SnapshotLayout { components, grid: grid.spec() }
    }

    pub fn n_space(&self) -> usize {
        self.grid.n_x.iter().product()
    }

    /// Total number of scalar fields.
    pub fn total_width(&self) -> usize {
        self.components.iter().map(|(_, w)| w).sum()
    }

    pub fn len(&self) -> usize {
        self.n_space() * self.total_width()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Range of `values` indices covered by the named component.
    pub fn component_range(&self, name: &str) -> Result<std::ops::Range<usize>> {
        let ns = self.n_space();
        let mut offset = 0;
        for (n, w) in &self.components {
            if n == name {
                return Ok(offset..offset + w * ns);
            }
            offset += w * ns;
        }
        Err(Error::LayoutMismatch(format!("no component named '{name}'")))
    }

    pub fn component_names(&self) -> Vec<String> {
        self.components.iter().map(|(n, _)| n.clone()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub layout: SnapshotLayout,
    /// Component-major flat values: for each component, its scalar fields in
    /// order, each of length `n_space`.
    pub values: Vec<f64>,
    /// Quadrature weights aligned with `values` (spatial weight per node).
    pub weights: Vec<f64>,
    /// Parameter vector that produced this snapshot.
    pub z: Vec<f64>,
    pub fidelity: Fidelity,
    pub t: f64,
}

impl Snapshot {
    pub fn zeros(layout: SnapshotLayout, grid: &Grid, z: Vec<f64>, fidelity: Fidelity) -> Snapshot {
        let len = layout.len();
        let sw = grid.space_weight();
        Snapshot {
            layout,
            values: vec![0.0; len],
            weights: vec![sw; len],
            z,
            fidelity,
            t: 0.0,
        }
    }

    /// Snapshot of a kinetic state: moments plus bulk velocities
    /// `up_i = J_i / rho_i` (floored denominator, see below) and the fluid
    /// velocity.
    pub fn from_kinetic(
        state: &KineticState,
        params: &ModelParams,
        grid: &Grid,
        z: Vec<f64>,
        fidelity: Fidelity,
    ) -> Snapshot {
        let mom_set = moments(state, params, grid);
        let ns = grid.n_space();
        let dim = grid.dim;
        let layout = SnapshotLayout::for_model(params, grid);
        let mut snap = Snapshot::zeros(layout, grid, z, fidelity);
        snap.t = state.t;
        {
            let r = snap.layout.component_range("rho").unwrap();
            snap.values[r].copy_from_slice(mom_set.rho.as_slice().unwrap());
        }
        {
            let r = snap.layout.component_range("mom").unwrap();
            let v = &mut snap.values[r];
            for d in 0..dim {
                for a in 0..ns {
                    let total: f64 = mom_set.j.iter().map(|j| j[(a, d)]).sum();
                    v[d * ns + a] = total;
                }
            }
        }
        for s in 1..=params.n_species {
            let r = snap.layout.component_range(&format!("n_{s}")).unwrap();
            snap.values[r].copy_from_slice(mom_set.n[s - 1].as_slice().unwrap());
        }
        for s in 1..=params.n_species {
            let r = snap.layout.component_range(&format!("up_{s}")).unwrap();
            let v = &mut snap.values[r];
            // bulk velocity J_i / rho_i; floor the density at a fraction of
            // its max so vacuum cells give ~0 instead of noise
            let rho_i: Array1<f64> = &mom_set.n[s - 1] * params.size(s);
            let floor = 1e-12 * rho_i.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1e-300);
            for d in 0..dim {
                for a in 0..ns {
                    v[d * ns + a] = mom_set.j[s - 1][(a, d)] / rho_i[a].max(floor);
                }
            }
        }
        {
            let r = snap.layout.component_range("u").unwrap();
            let v = &mut snap.values[r];
            for d in 0..dim {
                for a in 0..ns {
                    v[d * ns + a] = state.u[(a, d)];
                }
            }
        }
        snap
    }

    /// Snapshot of a hydrodynamic-limit state: particles move with the fluid,
    /// so `up_i = u` and `mom = rho * u`. A transverse column is dropped.
    pub fn from_fluid(
        state: &FluidState,
        params: &ModelParams,
        grid: &Grid,
        z: Vec<f64>,
        fidelity: Fidelity,
    ) -> Snapshot {
        let ns = grid.n_space();
        let dim = grid.dim;
        let layout = SnapshotLayout::for_model(params, grid);
        let mut snap = Snapshot::zeros(layout, grid, z, fidelity);
        snap.t = state.t;
        let rho = state.rho();
        {
            let r = snap.layout.component_range("rho").unwrap();
            snap.values[r].copy_from_slice(rho.as_slice().unwrap());
        }
        {
            let r = snap.layout.component_range("mom").unwrap();
            let v = &mut snap.values[r];
            for d in 0..dim {
                for a in 0..ns {
                    v[d * ns + a] = rho[a] * state.u[(a, d)];
                }
            }
        }
        for s in 1..=params.n_species {
            let r = snap.layout.component_range(&format!("n_{s}")).unwrap();
            snap.values[r].copy_from_slice(state.n[s - 1].as_slice().unwrap());
        }
        for s in 1..=params.n_species {
            let r = snap.layout.component_range(&format!("up_{s}")).unwrap();
            let v = &mut snap.values[r];
            for d in 0..dim {
                for a in 0..ns {
                    v[d * ns + a] = state.u[(a, d)];
                }
            }
        }
        {
            let r = snap.layout.component_range("u").unwrap();
            let v = &mut snap.values[r];
            for d in 0..dim {
                for a in 0..ns {
                    v[d * ns + a] = state.u[(a, d)];
                }
            }
        }
        snap
    }

    /// Snapshot of an acoustic (linearized) state, undoing the perturbation
    /// scaling: `n_i = 1 + delta n~_i`, `u = delta u~`.
    pub fn from_acoustic(
        state: &AcousticState,
        params: &ModelParams,
        grid: &Grid,
        z: Vec<f64>,
        fidelity: Fidelity,
    ) -> Snapshot {
        let ns = grid.n_space();
        let delta = params.delta;
        let fluid = FluidState {
            n: state
                .n_tilde
                .iter()
                .map(|nt| Array1::from_shape_fn(ns, |a| 1.0 + delta * nt[a]))
                .collect(),
            u: state.u_tilde.mapv(|x| delta * x),
            p: state.p_tilde.mapv(|x| delta * x),
            t: state.t,
        };
        Snapshot::from_fluid(&fluid, params, grid, z, fidelity)
    }

    pub fn same_layout(&self, other: &Snapshot) -> bool {
        self.layout == other.layout
    }

    /// Weighted inner product over all components (discrete L^2).
    pub fn inner_product(&self, other: &Snapshot) -> Result<f64> {
        if !self.same_layout(other) {
            return Err(Error::LayoutMismatch("snapshot layouts differ".into()));
        }
        if self.fidelity != other.fidelity {
            return Err(Error::LayoutMismatch(format!(
                "fidelity mismatch: {:?} vs {:?}",
                self.fidelity, other.fidelity
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(&self.weights)
            .map(|((a, b), w)| w * a * b)
            .sum())
    }

    /// Weighted inner product restricted to one named component.
    pub fn inner_product_component(&self, other: &Snapshot, name: &str) -> Result<f64> {
        if !self.same_layout(other) {
            return Err(Error::LayoutMismatch("snapshot layouts differ".into()));
        }
        let r = self.layout.component_range(name)?;
        Ok(r
            .map(|i| self.weights[i] * self.values[i] * other.values[i])
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * a * a)
            .sum::<f64>()
            .sqrt()
    }

    /// Weighted L^2 norm of `self - other` restricted to one component.
    pub fn component_diff_norm(&self, other: &Snapshot, name: &str) -> Result<f64> {
        if self.layout.components != other.layout.components
            || self.layout.n_space() != other.layout.n_space()
        {
            return Err(Error::LayoutMismatch("snapshot layouts differ".into()));
        }
        let r = self.layout.component_range(name)?;
        Ok(r
            .map(|i| {
                let d = self.values[i] - other.values[i];
                self.weights[i] * d * d
            })
            .sum::<f64>()
            .sqrt())
    }

    /// Weighted L^2 norm of one component.
    pub fn component_norm(&self, name: &str) -> Result<f64> {
        let r = self.layout.component_range(name)?;
        Ok(r
            .map(|i| self.weights[i] * self.values[i] * self.values[i])
            .sum::<f64>()
            .sqrt())
    }

    /// `sum_k c[k] * basis[k]`, tagged bi-fidelity, carrying the query's z.
    pub fn linear_combination(
        c: &[f64],
        basis: &[Snapshot],
        z: Vec<f64>,
        t: f64,
    ) -> Result<Snapshot> {
        if c.len() != basis.len() {
            return Err(Error::CoefficientLength { expected: basis.len(), got: c.len() });
        }
        let first = basis.first().ok_or_else(|| {
            Error::InvalidParameter("linear combination needs at least one basis snapshot".into())
        })?;
        let mut out = Snapshot {
            layout: first.layout.clone(),
            values: vec![0.0; first.values.len()],
            weights: first.weights.clone(),
            z,
            fidelity: Fidelity::BiFi,
            t,
        };
        for (ck, snap) in c.iter().zip(basis) {
            if !snap.same_layout(first) {
                return Err(Error::LayoutMismatch("basis snapshots have mixed layouts".into()));
            }
            for (o, v) in out.values.iter_mut().zip(&snap.values) {
                *o += ck * v;
            }
        }
        Ok(out)
    }
}

/// Ordered, layout-homogeneous collection of snapshots of one fidelity.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SnapshotSet {
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotSet {
    pub fn new() -> SnapshotSet {
        SnapshotSet { snapshots: Vec::new() }
    }

    pub fn push(&mut self, snap: Snapshot) -> Result<()> {
        if let Some(first) = self.snapshots.first() {
            if !snap.same_layout(first) || snap.fidelity != first.fidelity {
                return Err(Error::LayoutMismatch(
                    "snapshot does not match the set's layout/fidelity".into(),
                ));
            }
            if self.snapshots.iter().any(|s| s.z == snap.z) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate parameter vector {:?} in snapshot set",
                    snap.z
                )));
            }
        }
        self.snapshots.push(snap);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_snapshot(grid: &Grid, values: Vec<f64>) -> Snapshot {
        let layout = SnapshotLayout {
            components: vec![("c".to_string(), 1)],
            grid: grid.spec(),
        };
        let sw = grid.space_weight();
        let n = values.len();
        Snapshot {
            layout,
            values,
            weights: vec![sw; n],
            z: vec![],
            fidelity: Fidelity::Low,
            t: 0.0,
        }
    }

    #[test]
    fn unit_constant_inner_product_is_volume() {
        let g = Grid::new(1, 1.0, 32, 8.0, 8).unwrap();
        let a = scalar_snapshot(&g, vec![1.0; 32]);
        assert!((a.inner_product(&a).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fourier_modes_orthogonal() {
        let g = Grid::new(1, 1.0, 32, 8.0, 8).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let s: Vec<f64> = (0..32).map(|a| (two_pi * a as f64 / 32.0).sin()).collect();
        let c: Vec<f64> = (0..32).map(|a| (two_pi * a as f64 / 32.0).cos()).collect();
        let a = scalar_snapshot(&g, s);
        let b = scalar_snapshot(&g, c);
        assert!(a.inner_product(&b).unwrap().abs() < 1e-14);
    }

    #[test]
    fn layout_mismatch_rejected() {
        let g1 = Grid::new(1, 1.0, 32, 8.0, 8).unwrap();
        let g2 = Grid::new(1, 1.0, 16, 8.0, 8).unwrap();
        let a = scalar_snapshot(&g1, vec![1.0; 32]);
        let b = scalar_snapshot(&g2, vec![1.0; 16]);
        assert!(matches!(a.inner_product(&b), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn linear_combination_unit_vector_reproduces_basis() {
        let g = Grid::new(1, 1.0, 16, 8.0, 8).unwrap();
        let basis: Vec<Snapshot> = (0..3)
            .map(|k| scalar_snapshot(&g, (0..16).map(|a| ((a + k) as f64).sin()).collect()))
            .collect();
        let c = [0.0, 1.0, 0.0];
        let out = Snapshot::linear_combination(&c, &basis, vec![0.5], 0.1).unwrap();
        assert_eq!(out.values, basis[1].values);
        assert_eq!(out.fidelity, Fidelity::BiFi);
        assert_eq!(out.z, vec![0.5]);
    }

    #[test]
    fn kinetic_snapshot_layout_and_equilibrium_values() {
        use crate::kinetic::KineticSolver;
        let p = ModelParams::default();
        let g = Grid::new(1, 1.0, 16, 8.0, 32).unwrap();
        let solver = KineticSolver::new(p.clone(), g.clone()).unwrap();
        let state = solver.equilibrium_state();
        let snap = Snapshot::from_kinetic(&state, &p, &g, vec![], Fidelity::High);
        assert_eq!(snap.layout.total_width(), 1 + 1 + 2 + 2 + 1);
        let r = snap.layout.component_range("rho").unwrap();
        for i in r {
            // rho = 1*n_1 + 2*n_2 = 3 at the uniform equilibrium (|X| = 1)
            assert!((snap.values[i] - 3.0).abs() < 1e-8);
        }
        let r = snap.layout.component_range("mom").unwrap();
        for i in r {
            assert!(snap.values[i].abs() < 1e-12);
        }
    }

    #[test]
    fn set_rejects_duplicate_z() {
        let g = Grid::new(1, 1.0, 16, 8.0, 8).unwrap();
        let mut set = SnapshotSet::new();
        let mut a = scalar_snapshot(&g, vec![1.0; 16]);
        a.z = vec![0.3];
        let mut b = scalar_snapshot(&g, vec![2.0; 16]);
        b.z = vec![0.3];
        set.push(a).unwrap();
        assert!(set.push(b).is_err());
    }
}
