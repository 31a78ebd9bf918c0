//! Bi-fidelity machinery: greedy pivoted-Cholesky selection of parameter
//! nodes from a low-fidelity sweep, Galerkin projection of a low-fidelity
//! query onto the selected low-fidelity basis, and reconstruction as the same
//! combination of high-fidelity snapshots.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snapshot::{Snapshot, SnapshotSet};

/// Result of the greedy pivoted-Cholesky node selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreedySelection {
    /// Ordered candidate indices i_1 ... i_K.
    pub pivots: Vec<usize>,
    /// Cholesky factor: `l[t][j]` is the j-th coefficient of candidate t
    /// against the j-th pivot (M x K, lower-trapezoidal up to row order).
    pub l: Vec<Vec<f64>>,
    /// K x K Gramian of the selected snapshots, `G = L_sel L_sel^T`.
    pub gramian: Vec<Vec<f64>>,
    /// Max squared residual distance at each selection step (non-increasing).
    pub residual_history: Vec<f64>,
}

/// How projection coefficients are computed: one Galerkin solve over the
/// concatenated snapshot vector, or an independent solve per named component
/// (the default; the error analysis is per moment component).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionMode {
    PerComponent,
    Concatenated,
}

/// Galerkin coefficients of a query against the low-fidelity basis.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Concatenated(Vec<f64>),
    PerComponent(Vec<(String, Vec<f64>)>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiFiModel {
    pub selection: GreedySelection,
    pub lo_basis: Vec<Snapshot>,
    pub hi_basis: Vec<Snapshot>,
    pub mode: ProjectionMode,
}

/// Relative rank tolerance: selection stops with `RankDeficient` when the
/// best residual falls below `RANK_TOL * (initial max residual)`.
pub const RANK_TOL: f64 = 1e-12;

/// Greedy pivoted-Cholesky selection of `k` nodes from `candidates`.
///
/// At each step the candidate with the largest squared residual distance to
/// the span of the already-selected snapshots is chosen (ties broken by
/// lowest index), and the Cholesky factor is extended by one column. Inner
/// products against the pivot are evaluated in parallel.
pub fn greedy_select(candidates: &SnapshotSet, k: usize) -> Result<GreedySelection> {
    let m = candidates.len();
    if m == 0 || k == 0 || k > m {
        return Err(Error::InvalidParameter(format!(
            "greedy_select needs 1 <= K <= M, got K = {k}, M = {m}"
        )));
    }
    let snaps = &candidates.snapshots;
    let mut w: Vec<f64> = snaps
        .par_iter()
        .map(|s| s.inner_product(s))
        .collect::<Result<_>>()?;
    let mut selected = vec![false; m];
    let mut l: Vec<Vec<f64>> = vec![Vec::with_capacity(k); m];
    let mut pivots = Vec::with_capacity(k);
    let mut residual_history = Vec::with_capacity(k);

    let w_max0 = w.iter().cloned().fold(0.0f64, f64::max);
    let tau = RANK_TOL * w_max0;

    for step in 0..k {
        let mut pivot = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for t in 0..m {
            if !selected[t] && w[t] > best {
                best = w[t];
                pivot = t;
            }
        }
        if pivot == usize::MAX || best <= tau {
            return Err(Error::RankDeficient {
                achieved: step,
                requested: k,
                residual: best.max(0.0),
            });
        }
        residual_history.push(best);
        let diag = best.sqrt();
        let pivot_row = l[pivot].clone();
        let pivot_snap = &snaps[pivot];
        // Cholesky column: r(t) = <v_t, v_pivot> - sum_j L(t,j) L(pivot,j)
        let updates: Vec<(usize, f64)> = (0..m)
            .into_par_iter()
            .filter(|&t| !selected[t] && t != pivot)
            .map(|t| {
                let mut r = snaps[t].inner_product(pivot_snap)?;
                for j in 0..step {
                    r -= l[t][j] * pivot_row[j];
                }
                Ok((t, r / diag))
            })
            .collect::<Result<_>>()?;
        for (t, v) in updates {
            l[t].push(v);
            w[t] -= v * v;
        }
        l[pivot].push(diag);
        selected[pivot] = true;
        w[pivot] = 0.0;
        pivots.push(pivot);
    }

    // rows of candidates never updated after their selection step are short;
    // pad with zeros so every row has length k
    for row in l.iter_mut() {
        row.resize(k, 0.0);
    }
    let gramian: Vec<Vec<f64>> = pivots
        .iter()
        .map(|&a| {
            pivots
                .iter()
                .map(|&b| (0..k).map(|j| l[a][j] * l[b][j]).sum())
                .collect()
        })
        .collect();
    Ok(GreedySelection { pivots, l, gramian, residual_history })
}

impl BiFiModel {
    pub fn new(
        selection: GreedySelection,
        lo_basis: Vec<Snapshot>,
        hi_basis: Vec<Snapshot>,
        mode: ProjectionMode,
    ) -> Result<BiFiModel> {
        if lo_basis.len() != selection.pivots.len() || hi_basis.len() != selection.pivots.len() {
            return Err(Error::InvalidParameter(
                "basis lengths must match the number of selected pivots".into(),
            ));
        }
        for (lo, hi) in lo_basis.iter().zip(&hi_basis) {
            if lo.z != hi.z {
                return Err(Error::InvalidParameter(
                    "low- and high-fidelity bases are not aligned by parameter vector".into(),
                ));
            }
        }
        Ok(BiFiModel { selection, lo_basis, hi_basis, mode })
    }

    pub fn k(&self) -> usize {
        self.lo_basis.len()
    }

    /// Smallest and largest eigenvalues of the (concatenated) Gramian — the
    /// conditioning diagnostic the error bound depends on.
    pub fn gramian_extremes(&self) -> (f64, f64) {
        let k = self.k();
        let g = DMatrix::from_fn(k, k, |a, b| self.selection.gramian[a][b]);
        let eig = g.symmetric_eigen();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in eig.eigenvalues.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Solve the SPD system `G c = f` by Cholesky, retrying once with the
/// diagonal regularization `1e-12 * trace(G)/K` if plain factorization fails.
fn solve_gramian(g: &DMatrix<f64>, f: &[f64]) -> Result<Vec<f64>> {
    let k = g.nrows();
    let rhs = nalgebra::DVector::from_column_slice(f);
    if let Some(chol) = g.clone().cholesky() {
        return Ok(chol.solve(&rhs).iter().cloned().collect());
    }
    let lambda = 1e-12 * g.trace() / k as f64;
    let mut g_reg = g.clone();
    for i in 0..k {
        g_reg[(i, i)] += lambda;
    }
    if let Some(chol) = g_reg.cholesky() {
        return Ok(chol.solve(&rhs).iter().cloned().collect());
    }
    let eig = g.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Err(Error::SingularGramian { cond_estimate: hi / lo.abs().max(f64::MIN_POSITIVE) })
}

/// Galerkin coefficients of `query` against the model's low-fidelity basis:
/// `G c = f` with `f_k = <query, lo_k>` in the mode's inner product.
pub fn project_coefficients(query: &Snapshot, model: &BiFiModel) -> Result<Coefficients> {
    let k = model.k();
    if k == 0 {
        return Ok(match model.mode {
            ProjectionMode::Concatenated => Coefficients::Concatenated(vec![]),
            ProjectionMode::PerComponent => Coefficients::PerComponent(vec![]),
        });
    }
    if !query.same_layout(&model.lo_basis[0]) {
        return Err(Error::LayoutMismatch("query layout differs from the model basis".into()));
    }
    match model.mode {
        ProjectionMode::Concatenated => {
            let g = DMatrix::from_fn(k, k, |a, b| model.selection.gramian[a][b]);
            let f: Vec<f64> = model
                .lo_basis
                .iter()
                .map(|b| query.inner_product(b))
                .collect::<Result<_>>()?;
            Ok(Coefficients::Concatenated(solve_gramian(&g, &f)?))
        }
        ProjectionMode::PerComponent => {
            let mut out = Vec::new();
            for name in query.layout.component_names() {
                let g = DMatrix::from_fn(k, k, |a, b| {
                    model.lo_basis[a]
                        .inner_product_component(&model.lo_basis[b], &name)
                        .unwrap()
                });
                let f: Vec<f64> = model
                    .lo_basis
                    .iter()
                    .map(|b| query.inner_product_component(b, &name))
                    .collect::<Result<_>>()?;
                out.push((name, solve_gramian(&g, &f)?));
            }
            Ok(Coefficients::PerComponent(out))
        }
    }
}

/// Assemble the combination `sum_k c_k * basis_k` (component-wise in
/// per-component mode) from the given basis; the output carries the query's
/// parameter vector and final time.
fn combine(c: &Coefficients, basis: &[Snapshot], z: Vec<f64>, t: f64) -> Result<Snapshot> {
    match c {
        Coefficients::Concatenated(c) => Snapshot::linear_combination(c, basis, z, t),
        Coefficients::PerComponent(per) => {
            let first = basis.first().ok_or_else(|| {
                Error::InvalidParameter("reconstruction needs a nonempty basis".into())
            })?;
            let mut out = Snapshot {
                layout: first.layout.clone(),
                values: vec![0.0; first.values.len()],
                weights: first.weights.clone(),
                z,
                fidelity: crate::snapshot::Fidelity::BiFi,
                t,
            };
            if per.len() != first.layout.components.len() {
                return Err(Error::CoefficientLength {
                    expected: first.layout.components.len(),
                    got: per.len(),
                });
            }
            for (name, ck) in per {
                if ck.len() != basis.len() {
                    return Err(Error::CoefficientLength { expected: basis.len(), got: ck.len() });
                }
                let range = first.layout.component_range(name)?;
                for (coeff, snap) in ck.iter().zip(basis) {
                    for i in range.clone() {
                        out.values[i] += coeff * snap.values[i];
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Bi-fidelity reconstruction: the query's Galerkin combination applied to
/// the high-fidelity basis.
pub fn reconstruct(c: &Coefficients, model: &BiFiModel, z: Vec<f64>, t: f64) -> Result<Snapshot> {
    combine(c, &model.hi_basis, z, t)
}

/// Weighted norm of the low-fidelity projection residual
/// `query - sum_k c_k lo_k`.
pub fn projection_error(query: &Snapshot, model: &BiFiModel) -> Result<f64> {
    if model.k() == 0 {
        return Ok(query.norm());
    }
    let c = project_coefficients(query, model)?;
    let proj = combine(&c, &model.lo_basis, query.z.clone(), query.t)?;
    let err2: f64 = query
        .values
        .iter()
        .zip(&proj.values)
        .zip(&query.weights)
        .map(|((a, b), w)| w * (a - b) * (a - b))
        .sum();
    Ok(err2.max(0.0).sqrt())
}
