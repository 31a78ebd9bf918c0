//! Fidelity drivers: run one parameter sample through the high-fidelity
//! kinetic solver or one of the low-fidelity models (coarse-mesh kinetic,
//! hydrodynamic limit, or its linearization) and emit a moment snapshot.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acoustic::AcousticSolver;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hydro::HydroSolver;
use crate::initial::InitialData;
use crate::kinetic::KineticSolver;
use crate::params::ModelParams;
use crate::snapshot::{Fidelity, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoFiKind {
    /// The kinetic solver on a mesh (and hence time step) coarsened by the
    /// given factor; the velocity grid is kept.
    CoarseKinetic(usize),
    /// The hydrodynamic-limit solver.
    HydroLimit,
    /// The linearized (acoustic) solver.
    Acoustic,
}

impl LoFiKind {
    /// Grid the low-fidelity model runs on, derived from the high-fidelity
    /// grid.
    pub fn grid(&self, hi_grid: &Grid) -> Result<Grid> {
        match self {
            LoFiKind::CoarseKinetic(factor) => {
                if *factor == 0 {
                    return Err(Error::InvalidParameter("coarsening factor must be >= 1".into()));
                }
                hi_grid.coarsen(*factor)
            }
            LoFiKind::HydroLimit | LoFiKind::Acoustic => Ok(hi_grid.clone()),
        }
    }
}

/// Wall time and step count of one solver run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RunStats {
    pub wall_seconds: f64,
    pub steps: usize,
}

/// Integrate the kinetic system to `t_final` for one parameter sample.
pub fn run_high_fidelity(
    initial: &InitialData,
    z: &[f64],
    params: &ModelParams,
    grid: &Grid,
    t_final: f64,
    cfl: f64,
) -> Result<(Snapshot, RunStats)> {
    let start = Instant::now();
    let (mut state, _) = initial.build_kinetic(z, params, grid)?;
    let mut solver = KineticSolver::new(params.clone(), grid.clone())?;
    let dt0 = solver.stable_dt(&state, cfl);
    let steps = (t_final / dt0).ceil().max(1.0) as usize;
    solver.run(&mut state, t_final, cfl, None, 0)?;
    let snap = Snapshot::from_kinetic(&state, params, grid, z.to_vec(), Fidelity::High);
    Ok((snap, RunStats { wall_seconds: start.elapsed().as_secs_f64(), steps }))
}

/// Integrate the chosen low-fidelity model to `t_final` for one sample.
/// `grid` must be the one returned by `kind.grid(hi_grid)`.
pub fn run_low_fidelity(
    initial: &InitialData,
    z: &[f64],
    params: &ModelParams,
    grid: &Grid,
    kind: LoFiKind,
    t_final: f64,
    cfl: f64,
) -> Result<(Snapshot, RunStats)> {
    let start = Instant::now();
    let (snap, steps) = match kind {
        LoFiKind::CoarseKinetic(_) => {
            let (mut state, _) = initial.build_kinetic(z, params, grid)?;
            let mut solver = KineticSolver::new(params.clone(), grid.clone())?;
            let dt0 = solver.stable_dt(&state, cfl);
            let steps = (t_final / dt0).ceil().max(1.0) as usize;
            solver.run(&mut state, t_final, cfl, None, 0)?;
            (Snapshot::from_kinetic(&state, params, grid, z.to_vec(), Fidelity::Low), steps)
        }
        LoFiKind::HydroLimit => {
            let (mut state, _) = initial.build_fluid(z, params, grid, false)?;
            let mut solver = HydroSolver::new(params.clone(), grid.clone())?;
            let dt0 = solver.stable_dt(&state, cfl);
            let steps = (t_final / dt0).ceil().max(1.0) as usize;
            solver.run(&mut state, t_final, cfl)?;
            (Snapshot::from_fluid(&state, params, grid, z.to_vec(), Fidelity::Low), steps)
        }
        LoFiKind::Acoustic => {
            let (mut state, _) = initial.build_acoustic(z, params, grid, false)?;
            let mut solver = AcousticSolver::new(params.clone(), grid.clone())?;
            // exact in time: a single step reaches t_final
            solver.step(&mut state, t_final)?;
            (Snapshot::from_acoustic(&state, params, grid, z.to_vec(), Fidelity::Low), 1)
        }
    };
    Ok((snap, RunStats { wall_seconds: start.elapsed().as_secs_f64(), steps }))
}

/// Interpolate a snapshot onto a finer nested grid (linear in 1D, bilinear in
/// 2D, periodic). Used for plotting and error fields, never inside the
/// bi-fidelity projection.
pub fn prolong(snapshot: &Snapshot, target: &Grid) -> Result<Snapshot> {
    let source = Grid::from_spec(&snapshot.layout.grid)?;
    let _factor = target.refinement_factor(&source)?;
    let ns_t = target.n_space();
    let ns_s = source.n_space();
    let width = snapshot.layout.total_width();

    // per-dimension stencil: lower source index and interpolation fraction
    let mut lo_idx: Vec<Vec<usize>> = Vec::new();
    let mut frac: Vec<Vec<f64>> = Vec::new();
    for d in 0..target.dim {
        let mut li = Vec::with_capacity(target.n_x[d]);
        let mut fr = Vec::with_capacity(target.n_x[d]);
        for a in 0..target.n_x[d] {
            let s = a as f64 * target.dx[d] / source.dx[d];
            let i0 = s.floor() as usize % source.n_x[d];
            li.push(i0);
            fr.push(s - s.floor());
        }
        lo_idx.push(li);
        frac.push(fr);
    }

    let mut layout = snapshot.layout.clone();
    layout.grid = target.spec();
    let sw = target.space_weight();
    let mut out = Snapshot {
        layout,
        values: vec![0.0; ns_t * width],
        weights: vec![sw; ns_t * width],
        z: snapshot.z.clone(),
        fidelity: snapshot.fidelity,
        t: snapshot.t,
    };
    for w in 0..width {
        let src = &snapshot.values[w * ns_s..(w + 1) * ns_s];
        let dst = &mut out.values[w * ns_t..(w + 1) * ns_t];
        for (a, item) in dst.iter_mut().enumerate() {
            if target.dim == 1 {
                let i0 = lo_idx[0][a];
                let i1 = (i0 + 1) % source.n_x[0];
                let f = frac[0][a];
                *item = (1.0 - f) * src[i0] + f * src[i1];
            } else {
                let a0 = a % target.n_x[0];
                let a1 = a / target.n_x[0];
                let i0 = lo_idx[0][a0];
                let i1 = (i0 + 1) % source.n_x[0];
                let j0 = lo_idx[1][a1];
                let j1 = (j0 + 1) % source.n_x[1];
                let fx = frac[0][a0];
                let fy = frac[1][a1];
                let n0 = source.n_x[0];
                *item = (1.0 - fx) * (1.0 - fy) * src[i0 + n0 * j0]
                    + fx * (1.0 - fy) * src[i1 + n0 * j0]
                    + (1.0 - fx) * fy * src[i0 + n0 * j1]
                    + fx * fy * src[i1 + n0 * j1];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::SnapshotLayout;

    fn scalar_snapshot(grid: &Grid, values: Vec<f64>) -> Snapshot {
        let n = values.len();
        Snapshot {
            layout: SnapshotLayout {
                components: vec![("c".to_string(), 1)],
                grid: grid.spec(),
            },
            values,
            weights: vec![grid.space_weight(); n],
            z: vec![],
            fidelity: Fidelity::Low,
            t: 0.0,
        }
    }

    #[test]
    fn prolong_constant_exact() {
        let coarse = Grid::new(1, 1.0, 16, 8.0, 8).unwrap();
        let fine = Grid::new(1, 1.0, 64, 8.0, 8).unwrap();
        let snap = scalar_snapshot(&coarse, vec![2.5; 16]);
        let out = prolong(&snap, &fine).unwrap();
        assert!(out.values.iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn prolong_periodic_hat_exact() {
        // piecewise-linear periodic field is reproduced exactly by linear
        // interpolation on nested grids
        let coarse = Grid::new(1, 1.0, 16, 8.0, 8).unwrap();
        let fine = Grid::new(1, 1.0, 64, 8.0, 8).unwrap();
        let hat = |x: f64| 1.0 - 2.0 * (x - 0.5).abs(); // nodes at multiples of 1/16 incl. 0.5
        let vals: Vec<f64> = (0..16).map(|a| hat(coarse.x_coord(a, 0))).collect();
        let snap = scalar_snapshot(&coarse, vals);
        let out = prolong(&snap, &fine).unwrap();
        for a in 0..64 {
            let x = fine.x_coord(a, 0);
            assert!((out.values[a] - hat(x)).abs() < 1e-14, "node {a}");
        }
    }

    #[test]
    fn prolong_linear_exact_away_from_wrap() {
        let coarse = Grid::new(1, 1.0, 16, 8.0, 8).unwrap();
        let fine = Grid::new(1, 1.0, 64, 8.0, 8).unwrap();
        let vals: Vec<f64> = (0..16).map(|a| coarse.x_coord(a, 0)).collect();
        let snap = scalar_snapshot(&coarse, vals);
        let out = prolong(&snap, &fine).unwrap();
        // exact except inside the wrap-around cell [15/16, 1)
        for a in 0..60 {
            let x = fine.x_coord(a, 0);
            assert!((out.values[a] - x).abs() < 1e-14, "node {a}");
        }
    }

    #[test]
    fn prolong_sine_second_order() {
        let coarse = Grid::new(1, 1.0, 32, 8.0, 8).unwrap();
        let fine = Grid::new(1, 1.0, 128, 8.0, 8).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let vals: Vec<f64> = (0..32).map(|a| (two_pi * coarse.x_coord(a, 0)).sin()).collect();
        let snap = scalar_snapshot(&coarse, vals);
        let out = prolong(&snap, &fine).unwrap();
        let bound = (two_pi * coarse.dx[0]).powi(2);
        for a in 0..128 {
            let x = fine.x_coord(a, 0);
            assert!((out.values[a] - (two_pi * x).sin()).abs() < bound);
        }
    }

    #[test]
    fn prolong_rejects_non_nested() {
        let coarse = Grid::new(1, 1.0, 16, 8.0, 8).unwrap();
        let other = Grid::new(1, 1.0, 24, 8.0, 8).unwrap();
        let snap = scalar_snapshot(&coarse, vec![0.0; 16]);
        assert!(prolong(&snap, &other).is_err());
    }

    #[test]
    fn prolong_bilinear_2d_hat() {
        let coarse = Grid::new(2, 1.0, 8, 8.0, 8).unwrap();
        let fine = Grid::new(2, 1.0, 16, 8.0, 8).unwrap();
        // product of periodic hats, nodes aligned with the coarse mesh
        let hat = |x: f64| 1.0 - 2.0 * (x - 0.5).abs();
        let vals: Vec<f64> = (0..64)
            .map(|a| hat(coarse.x_coord(a, 0)) * hat(coarse.x_coord(a, 1)))
            .collect();
        let snap = scalar_snapshot(&coarse, vals);
        let out = prolong(&snap, &fine).unwrap();
        for a in 0..fine.n_space() {
            let expect = hat(fine.x_coord(a, 0)) * hat(fine.x_coord(a, 1));
            assert!((out.values[a] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn coarse_kinetic_factor_one_matches_high_fidelity() {
        let p = ModelParams::default();
        let g = Grid::new(1, 1.0, 16, 8.0, 16).unwrap();
        let spec = crate::initial::InitialDataSpec {
            profile: crate::initial::ProfileKind::Volcano,
            sigma: 0.0,
            ..Default::default()
        };
        let init = InitialData::new(spec, &g).unwrap();
        let (hi, _) = run_high_fidelity(&init, &[], &p, &g, 0.02, 0.5).unwrap();
        let lo_grid = LoFiKind::CoarseKinetic(1).grid(&g).unwrap();
        let (lo, _) =
            run_low_fidelity(&init, &[], &p, &lo_grid, LoFiKind::CoarseKinetic(1), 0.02, 0.5)
                .unwrap();
        assert_eq!(hi.values.len(), lo.values.len());
        for (a, b) in hi.values.iter().zip(&lo.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn hydro_equilibrium_steady_snapshot() {
        let p = ModelParams::default();
        let g = Grid::new(1, 1.0, 16, 8.0, 16).unwrap();
        let spec = crate::initial::InitialDataSpec {
            profile: crate::initial::ProfileKind::Equilibrium,
            sigma: 0.0,
            ..Default::default()
        };
        let init = InitialData::new(spec, &g).unwrap();
        let (lo, _) =
            run_low_fidelity(&init, &[], &p, &g, LoFiKind::HydroLimit, 0.05, 0.5).unwrap();
        // per species: density 1, bulk velocity 0 — the steady pair (1, 0)
        for s in 1..=2 {
            let r = lo.layout.component_range(&format!("n_{s}")).unwrap();
            for i in r {
                assert!((lo.values[i] - 1.0).abs() < 1e-12);
            }
            let r = lo.layout.component_range(&format!("up_{s}")).unwrap();
            for i in r {
                assert!(lo.values[i].abs() < 1e-12);
            }
        }
    }
}
