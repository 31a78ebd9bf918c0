//! Cheapest low-fidelity model: the linearization of the hydrodynamic limit
//! around the uniform rest state `n_i = 1`, `u = 0`. Writing
//! `n_i = 1 + delta n~_i`, `u = delta u~`, the leading-order system is
//!
//!   d/dt (sum_i i n~_i) + (sum_i i) div u~ = 0,
//!   (1 + kappa sum_i i) d/dt u~ + grad(p~ + kappa sum_i i n~_i) = laplace(u~),
//!   div u~ = 0,
//!
//! so the weighted density is frozen and the velocity solves a projected heat
//! equation with inertia `1 + kappa sum_i i`. Both are handled spectrally and
//! exactly in time; a step of any size is exact for this model.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::params::ModelParams;
use crate::spectral::Spectral;
use crate::state::AcousticState;

pub struct AcousticSolver {
    pub params: ModelParams,
    pub grid: Grid,
    spectral: Spectral,
    /// Effective inertia `1 + kappa * sum_i i` of the linearized momentum.
    pub inertia: f64,
}

impl AcousticSolver {
    pub fn new(params: ModelParams, grid: Grid) -> Result<AcousticSolver> {
        params.validate()?;
        if params.dim != grid.dim {
            return Err(Error::DimensionMismatch(format!(
                "params.dim = {} but grid.dim = {}",
                params.dim, grid.dim
            )));
        }
        let spectral = Spectral::new(&grid);
        let weighted_total: f64 = (1..=params.n_species).map(|i| i as f64).sum();
        let inertia = 1.0 + params.kappa * weighted_total;
        Ok(AcousticSolver { params, grid, spectral, inertia })
    }

    pub fn rest_state(&self, transverse: bool) -> AcousticState {
        let ns = self.grid.n_space();
        let ncols = self.grid.dim + usize::from(transverse);
        AcousticState {
            n_tilde: (0..self.params.n_species).map(|_| Array1::zeros(ns)).collect(),
            u_tilde: Array2::zeros((ns, ncols)),
            p_tilde: Array1::zeros(ns),
            t: 0.0,
        }
    }

    /// Project the coordinate components of `u~` onto divergence-free fields.
    pub fn project(&self, state: &mut AcousticState) {
        self.spectral.project(&mut state.u_tilde, None);
    }

    /// Advance by `dt` (exact for any `dt`): weighted densities frozen,
    /// velocity damped mode-wise by `exp(-|k|^2 dt / inertia)`; the transverse
    /// column obeys the same heat equation.
    pub fn step(&mut self, state: &mut AcousticState, dt: f64) -> Result<()> {
        let ns = self.grid.n_space();
        self.spectral.project(&mut state.u_tilde, None);
        let nu_dt = dt / self.inertia;
        for c in 0..state.u_tilde.ncols() {
            let mut col: Vec<f64> = state.u_tilde.column(c).to_vec();
            self.spectral.heat_step(&mut col, nu_dt);
            for a in 0..ns {
                state.u_tilde[(a, c)] = col[a];
            }
        }
        // leading-order pressure balances the density head
        let mut head = Array1::<f64>::zeros(ns);
        for (s, n) in state.n_tilde.iter().enumerate() {
            head += &(n * ((s + 1) as f64));
        }
        let mean = head.sum() / ns as f64;
        for a in 0..ns {
            state.p_tilde[a] = -self.params.kappa * (head[a] - mean);
        }
        state.t += dt;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_velocity_freezes_densities() {
        let p = ModelParams::default();
        let g = Grid::new(1, 1.0, 32, 8.0, 8).unwrap();
        let mut solver = AcousticSolver::new(p, g.clone()).unwrap();
        let mut state = solver.rest_state(false);
        for a in 0..g.n_space() {
            state.n_tilde[0][a] = (a as f64 * 0.2).sin();
            state.n_tilde[1][a] = (a as f64 * 0.4).cos();
        }
        let reference = state.n_tilde.clone();
        solver.step(&mut state, 0.07).unwrap();
        for s in 0..2 {
            for a in 0..g.n_space() {
                assert_eq!(state.n_tilde[s][a], reference[s][a]);
            }
        }
    }

    #[test]
    fn shear_mode_decays_at_weighted_rate() {
        // oracle: closed-form heat kernel, rate 4 pi^2 / (1 + kappa sum i)
        let p = ModelParams::default(); // kappa = 0.5, N = 2 -> inertia 2.5
        let g = Grid::new(1, 1.0, 32, 8.0, 8).unwrap();
        let mut solver = AcousticSolver::new(p, g.clone()).unwrap();
        assert!((solver.inertia - 2.5).abs() < 1e-15);
        let mut state = solver.rest_state(true);
        let two_pi = 2.0 * std::f64::consts::PI;
        let amp = 0.8;
        for a in 0..g.n_space() {
            state.u_tilde[(a, 1)] = amp * (two_pi * g.x_coord(a, 0)).sin();
        }
        let t = 0.3;
        solver.step(&mut state, t).unwrap();
        let expect = (-two_pi * two_pi * t / 2.5).exp();
        for a in 0..g.n_space() {
            let x = g.x_coord(a, 0);
            let rel = (state.u_tilde[(a, 1)] - amp * expect * (two_pi * x).sin()).abs() / (amp * expect);
            assert!(rel < 1e-6, "rel error {rel}");
        }
    }

    #[test]
    fn stream_function_mode_decays_2d() {
        let p = ModelParams { dim: 2, ..Default::default() };
        let g = Grid::new(2, 1.0, 16, 8.0, 8).unwrap();
        let mut solver = AcousticSolver::new(p, g.clone()).unwrap();
        let mut state = solver.rest_state(false);
        let two_pi = 2.0 * std::f64::consts::PI;
        for a in 0..g.n_space() {
            let y = g.x_coord(a, 1);
            state.u_tilde[(a, 0)] = (two_pi * y).sin();
        }
        let t = 0.1;
        solver.step(&mut state, t).unwrap();
        let expect = (-two_pi * two_pi * t / 2.5).exp();
        for a in 0..g.n_space() {
            let y = g.x_coord(a, 1);
            let rel = (state.u_tilde[(a, 0)] - expect * (two_pi * y).sin()).abs() / expect;
            assert!(rel < 1e-6);
        }
    }

    #[test]
    fn projection_idempotent_through_solver() {
        let p = ModelParams { dim: 2, ..Default::default() };
        let g = Grid::new(2, 1.0, 16, 8.0, 8).unwrap();
        let solver = AcousticSolver::new(p, g.clone()).unwrap();
        let mut state = solver.rest_state(false);
        for a in 0..g.n_space() {
            state.u_tilde[(a, 0)] = ((a * 3) as f64 * 0.17).sin();
            state.u_tilde[(a, 1)] = ((a * 5) as f64 * 0.23).cos();
        }
        solver.project(&mut state);
        let once = state.u_tilde.clone();
        solver.project(&mut state);
        let diff = (&state.u_tilde - &once).iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(diff < 1e-14);
    }
}
