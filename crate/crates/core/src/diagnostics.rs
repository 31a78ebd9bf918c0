//! Quantitative diagnostics: the hypocoercivity energy of the perturbation
//! around global equilibrium, exponential-decay fitting, sample-averaged L^2
//! error metrics, and conservation drift reports.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kinetic::{maxwellian, momentum_scale, species_mass, total_momentum};
use crate::params::ModelParams;
use crate::snapshot::SnapshotSet;
use crate::state::KineticState;

/// Floor applied to the Maxwellian weight in the energy integrand, relative
/// to its maximum. The perturbation norm divides by `mu_i`; far velocity
/// tails would otherwise amplify rounding noise. Recorded in output metadata.
pub const MU_FLOOR_REL: f64 = 1e-30;

/// Format a float with 17 significant digits (round-trip exact for f64).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Centered first derivative of a flat spatial field along dimension `d`.
fn derivative(field: &[f64], grid: &Grid, d: usize) -> Vec<f64> {
    let ns = grid.n_space();
    let inv2dx = 1.0 / (2.0 * grid.dx[d]);
    let mut out = vec![0.0; ns];
    for a in 0..ns {
        let mut idx = grid.x_multi_index(a);
        let n = grid.n_x[d];
        let i0 = idx[d];
        idx[d] = (i0 + 1) % n;
        let next = grid.x_flat_index(&idx);
        idx[d] = (i0 + n - 1) % n;
        let prev = grid.x_flat_index(&idx);
        out[a] = (field[next] - field[prev]) * inv2dx;
    }
    out
}

/// All centered-difference derivatives `d^alpha` with `|alpha| <= s` of a
/// flat spatial field (including the identity), by repeated application of
/// the first-derivative stencil.
fn derivatives_up_to(field: &[f64], grid: &Grid, s: usize) -> Vec<Vec<f64>> {
    let mut level: Vec<Vec<f64>> = vec![field.to_vec()];
    let mut all = level.clone();
    for _ in 0..s {
        let mut next_level = Vec::new();
        for f in &level {
            for d in 0..grid.dim {
                next_level.push(derivative(f, grid, d));
            }
        }
        // in 2D, d_x d_y and d_y d_x coincide; keep the canonical subset
        if grid.dim == 2 {
            let mut dedup = Vec::new();
            let n = level.len();
            for (i, f) in next_level.iter().enumerate() {
                let (src, dir) = (i / grid.dim, i % grid.dim);
                // skip d_x applied after a d_y-leading chain duplicate:
                // keep only non-decreasing direction sequences
                if dir == 0 && src > 0 && n > 1 && src == n - 1 {
                    continue;
                }
                dedup.push(f.clone());
            }
            next_level = dedup;
        }
        all.extend(next_level.iter().cloned());
        level = next_level;
    }
    all
}

/// Hypocoercivity energy `E_{s,0}` of a kinetic state:
/// `(1/delta^2) |u|_{s,0}^2 + kappa theta sum_i |f_i|_{s,0}^2
///  + (1/delta^2) |u_bar|^2`, with `f_i = (F_i - mu_i)/(delta sqrt(mu_i))`
/// and `|.|_{s,0}` the discrete Sobolev seminorm sum over `|alpha| <= s` of
/// spatial centered differences. Computed in the variable
/// `g_i = (F_i - mu_i)/delta` with a floored `1/mu_i` weight (see
/// [`MU_FLOOR_REL`]).
pub fn energy(state: &KineticState, params: &ModelParams, grid: &Grid, s: usize) -> Result<f64> {
    if s > 2 {
        return Err(Error::InvalidParameter(format!("energy order s must be <= 2, got {s}")));
    }
    let ns = grid.n_space();
    let nv = grid.n_vel();
    let delta2 = params.delta * params.delta;
    let sw = grid.space_weight();
    let vw = grid.v_weights();

    // fluid term and mean term
    let mut e_u = 0.0;
    let mut u_bar = vec![0.0; grid.dim];
    for d in 0..grid.dim {
        let col: Vec<f64> = state.u.column(d).to_vec();
        for der in derivatives_up_to(&col, grid, s) {
            e_u += der.iter().map(|x| x * x).sum::<f64>() * sw;
        }
        u_bar[d] = col.iter().sum::<f64>() * sw / grid.space_volume();
    }
    let e_bar: f64 = u_bar.iter().map(|x| x * x).sum();

    // kinetic perturbation terms
    let mut e_f = 0.0;
    for (sp, f) in state.f.iter().enumerate() {
        let mu = maxwellian(sp + 1, params, grid);
        let mu_max = mu.iter().cloned().fold(0.0f64, f64::max);
        let inv_mu: Vec<f64> = mu.iter().map(|&m| 1.0 / m.max(MU_FLOOR_REL * mu_max)).collect();
        // x-field per velocity node of g = (F - mu)/delta
        let mut g_col = vec![0.0; ns];
        for j in 0..nv {
            for a in 0..ns {
                g_col[a] = (f[(a, j)] - mu[j]) / params.delta;
            }
            let mut col_sum = 0.0;
            for der in derivatives_up_to(&g_col, grid, s) {
                col_sum += der.iter().map(|x| x * x).sum::<f64>() * sw;
            }
            e_f += col_sum * vw[j] * inv_mu[j];
        }
    }
    Ok(e_u / delta2 + params.kappa * params.theta_bar * e_f + e_bar / delta2)
}

/// Energy time series at orders 0, 1, 2 with the fitted decay rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub e0: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub lambda_fit: Option<f64>,
    pub r_squared: Option<f64>,
    /// True if `e2` is non-increasing at every checkpoint (slack 1e-10
    /// relative).
    pub monotone: bool,
}

impl EnergyReport {
    pub fn from_series(times: Vec<f64>, e0: Vec<f64>, e1: Vec<f64>, e2: Vec<f64>) -> EnergyReport {
        let scale = e2.first().cloned().unwrap_or(0.0).abs().max(1e-300);
        let monotone = e2.windows(2).all(|w| w[1] <= w[0] + 1e-10 * scale);
        let fit = fit_decay(&times, &e2).ok();
        EnergyReport {
            times,
            e0,
            e1,
            e2,
            lambda_fit: fit.map(|(l, _)| l),
            r_squared: fit.map(|(_, r2)| r2),
            monotone,
        }
    }
}

/// Least-squares exponential decay rate of a positive series: slope of
/// `log E` against `t` over the second half of the series (the transient is
/// excluded). Returns `(lambda, R^2)`.
pub fn fit_decay(times: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    if times.len() != values.len() || times.len() < 5 {
        return Err(Error::FitSkipped(format!(
            "need at least 5 aligned checkpoints, got {}",
            times.len().min(values.len())
        )));
    }
    if values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::FitSkipped("series contains non-positive entries".into()));
    }
    let start = times.len() / 2;
    let t = &times[start..];
    let y: Vec<f64> = values[start..].iter().map(|v| v.ln()).collect();
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for (ti, yi) in t.iter().zip(&y) {
        stt += (ti - tm) * (ti - tm);
        sty += (ti - tm) * (yi - ym);
        syy += (yi - ym) * (yi - ym);
    }
    if stt == 0.0 {
        return Err(Error::FitSkipped("degenerate time axis".into()));
    }
    let slope = sty / stt;
    let r2 = if syy == 0.0 { 1.0 } else { (sty * sty) / (stt * syy) };
    Ok((-slope, r2))
}

/// Per-component mean weighted-L^2 distance between two aligned snapshot
/// sets (same z, same grid): `(1/M) sum_i ||ref_i - approx_i||_{L^2}` per
/// named component.
pub fn mean_l2_error(
    reference: &SnapshotSet,
    approx: &SnapshotSet,
) -> Result<Vec<(String, f64)>> {
    if reference.len() != approx.len() {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} snapshots, approx has {}",
            reference.len(),
            approx.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::InvalidParameter("empty snapshot sets".into()));
    }
    for (r, a) in reference.snapshots.iter().zip(&approx.snapshots) {
        if r.z != a.z {
            return Err(Error::DimensionMismatch(
                "snapshot sets are not aligned by parameter vector".into(),
            ));
        }
    }
    let names = reference.snapshots[0].layout.component_names();
    let m = reference.len() as f64;
    let mut out = Vec::new();
    for name in names {
        let mut acc = 0.0;
        for (r, a) in reference.snapshots.iter().zip(&approx.snapshots) {
            acc += r.component_diff_norm(a, &name)?;
        }
        out.push((name, acc / m));
    }
    Ok(out)
}

/// Maximum relative drifts of the conserved quantities over a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConservationReport {
    /// Per-species max relative mass drift.
    pub mass_drift: Vec<f64>,
    /// Max momentum drift relative to the initial momentum content
    /// (L^1 magnitude of fluid plus weighted particle momentum).
    pub momentum_drift: f64,
}

pub fn conservation_report(
    checkpoints: &[KineticState],
    params: &ModelParams,
    grid: &Grid,
) -> Result<ConservationReport> {
    let first = checkpoints
        .first()
        .ok_or_else(|| Error::InvalidParameter("no checkpoints".into()))?;
    let mass0 = species_mass(first, grid);
    let mom0 = total_momentum(first, params, grid);
    let scale = momentum_scale(first, params, grid).max(f64::EPSILON);
    let mut mass_drift = vec![0.0f64; mass0.len()];
    let mut momentum_drift = 0.0f64;
    for state in checkpoints.iter().skip(1) {
        let mass = species_mass(state, grid);
        for s in 0..mass0.len() {
            mass_drift[s] = mass_drift[s].max((mass[s] - mass0[s]).abs() / mass0[s].abs());
        }
        let mom = total_momentum(state, params, grid);
        for d in 0..grid.dim {
            momentum_drift = momentum_drift.max((mom[d] - mom0[d]).abs() / scale);
        }
    }
    Ok(ConservationReport { mass_drift, momentum_drift })
}

/// Sample variance helper for Monte-Carlo checks.
pub fn variance(samples: &Array1<f64>) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.sum() / n;
    samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}
