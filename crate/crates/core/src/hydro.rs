//! Low-fidelity solver for the hydrodynamic limit of the kinetic-fluid
//! system: species densities advected by a shared velocity field, and a
//! variable-inertia incompressible momentum equation
//!
//!   d/dt n_i + div(n_i u) = 0,
//!   d/dt((1 + kappa rho) u) + Div((1 + kappa rho) u (x) u)
//!       + grad(p + kappa rho) = laplace(u),       div u = 0,
//!
//! with `rho = sum_i i n_i`. One step: explicit upwind density advection,
//! explicit divergence-form momentum advection, implicit viscous Helmholtz
//! solve `(w - dt laplace) u = q` with `w = 1 + kappa rho`, and a weighted
//! pressure projection `u = (q - grad phi)/w` enforcing `div u = 0` (closed
//! form in 1D, preconditioned CG in 2D). The density-gradient force is a pure
//! gradient, so it is absorbed into the projection; the reported pressure is
//! `phi/dt - kappa (rho - mean rho)`.
//!
//! `u` may carry one extra trailing column: a transverse velocity component
//! that is advected and diffused like a momentum component but excluded from
//! the projection. This is how shear (solenoidal) modes are represented on a
//! 1D mesh.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::params::ModelParams;
use crate::spectral::Spectral;
use crate::state::FluidState;

/// Preconditioned conjugate gradients for an SPD operator given as a closure.
/// Solves `A x = b` to relative tolerance `tol` starting from `x = 0`.
pub(crate) fn pcg(
    apply_a: &mut dyn FnMut(&[f64], &mut [f64]),
    apply_pre: &mut dyn FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok(0);
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    apply_pre(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 0..max_iter {
        apply_a(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::ProjectionFailure { residual: f64::NAN, iters: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm <= tol * b_norm {
            return Ok(it + 1);
        }
        apply_pre(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(Error::ProjectionFailure { residual: r_norm / b_norm, iters: max_iter })
}

pub struct HydroSolver {
    pub params: ModelParams,
    pub grid: Grid,
    spectral: Spectral,
    prev: Vec<Vec<usize>>,
    next: Vec<Vec<usize>>,
}

impl HydroSolver {
    pub fn new(params: ModelParams, grid: Grid) -> Result<HydroSolver> {
        params.validate()?;
        if params.dim != grid.dim {
            return Err(Error::DimensionMismatch(format!(
                "params.dim = {} but grid.dim = {}",
                params.dim, grid.dim
            )));
        }
        let spectral = Spectral::new(&grid);
        let ns = grid.n_space();
        let mut prev = Vec::new();
        let mut next = Vec::new();
        for d in 0..grid.dim {
            let mut pd = vec![0usize; ns];
            let mut nd = vec![0usize; ns];
            for a in 0..ns {
                let mut idx = grid.x_multi_index(a);
                let n = grid.n_x[d];
                let i0 = idx[d];
                idx[d] = (i0 + n - 1) % n;
                pd[a] = grid.x_flat_index(&idx);
                idx[d] = (i0 + 1) % n;
                nd[a] = grid.x_flat_index(&idx);
            }
            prev.push(pd);
            next.push(nd);
        }
        Ok(HydroSolver { params, grid, spectral, prev, next })
    }

    /// Uniform rest state: `n_i = 1/|X|` per species, `u = 0`.
    /// `transverse` adds the extra shear column.
    pub fn equilibrium_state(&self, transverse: bool) -> FluidState {
        let ns = self.grid.n_space();
        let ncols = self.grid.dim + usize::from(transverse);
        FluidState {
            n: (0..self.params.n_species)
                .map(|_| Array1::from_elem(ns, 1.0 / self.grid.space_volume()))
                .collect(),
            u: Array2::zeros((ns, ncols)),
            p: Array1::zeros(ns),
            t: 0.0,
        }
    }

    /// Largest stable step for the explicit advection terms. The advecting
    /// speed is floored at 1 so the step stays bounded near rest states.
    pub fn stable_dt(&self, state: &FluidState, cfl: f64) -> f64 {
        let mut speed = 1.0f64;
        for a in 0..self.grid.n_space() {
            let mut s = 0.0;
            for d in 0..self.grid.dim {
                s += state.u[(a, d)].abs();
            }
            speed = speed.max(s);
        }
        let dx_min = self.grid.dx.iter().cloned().fold(f64::INFINITY, f64::min);
        cfl * dx_min / speed
    }

    pub fn step(&mut self, state: &mut FluidState, dt: f64) -> Result<()> {
        let limit = self.stable_dt(state, 1.0);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit, context: "explicit advection in x".into() });
        }
        let ns = self.grid.n_space();
        let dim = self.grid.dim;
        let ncols = state.u.ncols();
        let kappa = self.params.kappa;

        let rho_old = state.rho();
        let u_old = state.u.clone();

        // 1. species densities: conservative first-order upwind
        for s in 0..state.n_species() {
            let n_old = state.n[s].clone();
            for d in 0..dim {
                let c = dt / self.grid.dx[d];
                let prev = &self.prev[d];
                let next = &self.next[d];
                for a in 0..ns {
                    // face a+1/2 between a and next[a]; a-1/2 between prev[a] and a
                    let u_r = 0.5 * (u_old[(a, d)] + u_old[(next[a], d)]);
                    let u_l = 0.5 * (u_old[(prev[a], d)] + u_old[(a, d)]);
                    let flux_r = if u_r > 0.0 { n_old[a] * u_r } else { n_old[next[a]] * u_r };
                    let flux_l = if u_l > 0.0 { n_old[prev[a]] * u_l } else { n_old[a] * u_l };
                    state.n[s][a] -= c * (flux_r - flux_l);
                }
            }
        }
        let rho_new = state.rho();

        // 2. momentum advection in divergence form, q = (1 + kappa rho) u
        let mut q = Array2::<f64>::zeros((ns, ncols));
        for a in 0..ns {
            let w = 1.0 + kappa * rho_old[a];
            for c in 0..ncols {
                q[(a, c)] = w * u_old[(a, c)];
            }
        }
        let q_adv = q.clone();
        for c in 0..ncols {
            for d in 0..dim {
                let inv2dx = dt / (2.0 * self.grid.dx[d]);
                let prev = &self.prev[d];
                let next = &self.next[d];
                for a in 0..ns {
                    let flux_r = q_adv[(next[a], c)] * u_old[(next[a], d)];
                    let flux_l = q_adv[(prev[a], c)] * u_old[(prev[a], d)];
                    q[(a, c)] -= inv2dx * (flux_r - flux_l);
                }
            }
        }

        // 3. implicit viscous solve: (w - dt laplace) u = q, per column
        let w_new: Vec<f64> = (0..ns).map(|a| 1.0 + kappa * rho_new[a]).collect();
        let w_mean = w_new.iter().sum::<f64>() / ns as f64;
        for c in 0..ncols {
            let rhs: Vec<f64> = q.column(c).to_vec();
            let mut sol = vec![0.0; ns];
            let sp = &self.spectral;
            let wv = &w_new;
            let mut apply_a = |x: &[f64], out: &mut [f64]| {
                sp.laplacian_into(x, out);
                for i in 0..ns {
                    out[i] = wv[i] * x[i] - dt * out[i];
                }
            };
            let mut apply_pre =
                |x: &[f64], out: &mut [f64]| sp.mode_scale_into(x, out, |k2| 1.0 / (w_mean + dt * k2));
            pcg(&mut apply_a, &mut apply_pre, &rhs, &mut sol, 1e-13, 400)?;
            for a in 0..ns {
                state.u[(a, c)] = sol[a];
                q[(a, c)] = w_new[a] * sol[a];
            }
        }

        // 4. weighted projection of the coordinate components
        if dim == 1 {
            // incompressibility forces u_x uniform; the weighted mean
            // preserves the total momentum integral exactly
            let num: f64 = (0..ns).map(|a| q[(a, 0)]).sum();
            let den: f64 = w_new.iter().sum();
            let u_mean = num / den;
            for a in 0..ns {
                state.u[(a, 0)] = u_mean;
            }
            for a in 0..ns {
                state.p[a] = -kappa * (rho_new[a] - rho_new.sum() / ns as f64);
            }
        } else {
            // solve div((grad phi)/w) = div(q/w), then u = (q - grad phi)/w
            let mut q_over_w = Array2::<f64>::zeros((ns, dim));
            for a in 0..ns {
                for c in 0..dim {
                    q_over_w[(a, c)] = q[(a, c)] / w_new[a];
                }
            }
            let b = self.spectral.divergence(&q_over_w);
            let mut phi = vec![0.0; ns];
            {
                let sp = &self.spectral;
                let wv = &w_new;
                let mut grad_buf = Array2::<f64>::zeros((ns, dim));
                let mut apply_a = |x: &[f64], out: &mut [f64]| {
                    grad_buf.assign(&sp.gradient(x));
                    for a in 0..ns {
                        for c in 0..dim {
                            grad_buf[(a, c)] /= wv[a];
                        }
                    }
                    let div = sp.divergence(&grad_buf);
                    for a in 0..ns {
                        out[a] = -div[a];
                    }
                };
                let mut apply_pre = |x: &[f64], out: &mut [f64]| {
                    sp.neg_inv_laplacian(x, out);
                    for o in out.iter_mut() {
                        *o *= w_mean;
                    }
                };
                let rhs: Vec<f64> = b.iter().map(|&v| -v).collect();
                pcg(&mut apply_a, &mut apply_pre, &rhs, &mut phi, 1e-12, 400)?;
            }
            let grad_phi = self.spectral.gradient(&phi);
            for a in 0..ns {
                for c in 0..dim {
                    state.u[(a, c)] = (q[(a, c)] - grad_phi[(a, c)]) / w_new[a];
                }
            }
            let rho_mean = rho_new.sum() / ns as f64;
            for a in 0..ns {
                state.p[a] = phi[a] / dt - kappa * (rho_new[a] - rho_mean);
            }
        }
        state.t += dt;
        if state.has_nan() {
            return Err(Error::NanDetected(format!("hydro state at t = {}", state.t)));
        }
        Ok(())
    }

    /// Total momentum integral `int (1 + kappa rho) u dx` per column.
    pub fn total_momentum(&self, state: &FluidState) -> Vec<f64> {
        let sw = self.grid.space_weight();
        let rho = state.rho();
        (0..state.u.ncols())
            .map(|c| {
                (0..self.grid.n_space())
                    .map(|a| (1.0 + self.params.kappa * rho[a]) * state.u[(a, c)])
                    .sum::<f64>()
                    * sw
            })
            .collect()
    }

    /// Integrate to `t_final` with uniform CFL-limited steps.
    pub fn run(&mut self, state: &mut FluidState, t_final: f64, cfl: f64) -> Result<()> {
        let dt0 = self.stable_dt(state, cfl);
        let n_steps = (t_final / dt0).ceil().max(1.0) as usize;
        let dt = t_final / n_steps as f64;
        for _ in 0..n_steps {
            self.step(state, dt)?;
        }
        Ok(())
    }
}
