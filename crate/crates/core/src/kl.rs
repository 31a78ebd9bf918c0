//! Karhunen-Loève decomposition of a squared-exponential covariance kernel
//! on the periodic spatial mesh, and sampling of the multiplicative
//! perturbation fields built from it.

use nalgebra::DMatrix;
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Dense covariance matrix `C_ab = exp(-d(x_a, x_b)^2 / ell^2)`. With
/// `periodic` set (the default elsewhere), `d` is the per-dimension periodic
/// distance `min(|dx|, L - |dx|)`; otherwise the plain Euclidean distance.
pub fn assemble_covariance(grid: &Grid, ell: f64, periodic: bool) -> Result<DMatrix<f64>> {
    if !(ell > 0.0) {
        return Err(Error::InvalidParameter(format!("correlation length must be > 0, got {ell}")));
    }
    let ns = grid.n_space();
    let mut c = DMatrix::zeros(ns, ns);
    for a in 0..ns {
        for b in a..ns {
            let mut d2 = 0.0;
            for dd in 0..grid.dim {
                let mut diff = (grid.x_coord(a, dd) - grid.x_coord(b, dd)).abs();
                if periodic {
                    diff = diff.min(grid.x_len[dd] - diff);
                }
                d2 += diff * diff;
            }
            let v = (-d2 / (ell * ell)).exp();
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    Ok(c)
}

/// Karhunen-Loève modes of a covariance kernel on the grid.
///
/// Eigenvalues are sorted non-increasing; eigenvectors are orthonormal in the
/// weighted (quadrature) discrete L^2. `n_modes` modes are retained for
/// sampling so that the retained spectrum fraction meets the configured
/// threshold; the full spectrum is kept for diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KLField {
    pub ell: f64,
    pub sigma: f64,
    /// Full spectrum, non-increasing, clamped at 0.
    pub eigvals: Vec<f64>,
    /// Eigenvectors as rows of length n_space, aligned with `eigvals`,
    /// L^2-orthonormal under the uniform spatial quadrature.
    pub eigvecs: Vec<Vec<f64>>,
    /// Number of leading modes used by `sample_field`.
    pub n_modes: usize,
    /// Retained spectrum fraction `sum_{i<n_modes} lambda_i / trace`.
    pub spectrum_fraction: f64,
}

/// Solve the weighted eigenproblem `int C(x,y) g(y) dy = lambda g(x)` and
/// retain the smallest leading set of modes whose spectrum fraction reaches
/// `fraction`.
pub fn kl_decompose(
    cov: &DMatrix<f64>,
    grid: &Grid,
    ell: f64,
    sigma: f64,
    fraction: f64,
) -> Result<KLField> {
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "spectrum fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let ns = grid.n_space();
    if cov.nrows() != ns || cov.ncols() != ns {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{} but the grid has {ns} nodes",
            cov.nrows(),
            cov.ncols()
        )));
    }
    // uniform spatial weights: the weighted problem C W g = lambda g is
    // symmetric after the similarity with W^(1/2), which here is a scalar
    let sw = grid.space_weight();
    let b = cov * sw;
    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap()
            .then(i.cmp(&j))
    });
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let mut eigvals = Vec::with_capacity(ns);
    let mut eigvecs = Vec::with_capacity(ns);
    let inv_sqrt_sw = 1.0 / sw.sqrt();
    for &i in &order {
        let mut lambda = eig.eigenvalues[i];
        if lambda < -1e-12 * lambda_max {
            return Err(Error::EigenFailure(format!(
                "covariance has a significantly negative eigenvalue {lambda}"
            )));
        }
        lambda = lambda.max(0.0);
        eigvals.push(lambda);
        // Euclidean-orthonormal columns -> L^2-orthonormal via 1/sqrt(w)
        eigvecs.push(eig.eigenvectors.column(i).iter().map(|&v| v * inv_sqrt_sw).collect());
    }
    let trace: f64 = eigvals.iter().sum();
    let mut running = 0.0;
    let mut n_modes = ns;
    for (i, l) in eigvals.iter().enumerate() {
        running += l;
        if running / trace >= fraction {
            n_modes = i + 1;
            break;
        }
    }
    let spectrum_fraction = eigvals[..n_modes].iter().sum::<f64>() / trace;
    Ok(KLField { ell, sigma, eigvals, eigvecs, n_modes, spectrum_fraction })
}

impl KLField {
    /// Multiplicative perturbation `1 + sigma sum_i sqrt(lambda_i) g_i(x) z_i`
    /// over the retained modes, clamped below at 1e-8. Returns the field and
    /// the number of clamped nodes.
    pub fn sample_field(&self, z_block: &[f64]) -> Result<(Array1<f64>, usize)> {
        if z_block.len() != self.n_modes {
            return Err(Error::DimensionMismatch(format!(
                "z block has {} entries but the field retains {} modes",
                z_block.len(),
                self.n_modes
            )));
        }
        let ns = self.eigvecs[0].len();
        let mut field = Array1::from_elem(ns, 1.0);
        for (i, &zi) in z_block.iter().enumerate() {
            let scale = self.sigma * self.eigvals[i].sqrt() * zi;
            for (f, &g) in field.iter_mut().zip(&self.eigvecs[i]) {
                *f += scale * g;
            }
        }
        let mut clamped = 0;
        for f in field.iter_mut() {
            if *f < 1e-8 {
                *f = 1e-8;
                clamped += 1;
            }
        }
        Ok((field, clamped))
    }

    /// Pointwise variance of the truncated expansion,
    /// `sigma^2 sum_i lambda_i g_i(x)^2`.
    pub fn truncated_variance(&self) -> Array1<f64> {
        let ns = self.eigvecs[0].len();
        let mut var = Array1::zeros(ns);
        for i in 0..self.n_modes {
            for (v, &g) in var.iter_mut().zip(&self.eigvecs[i]) {
                *v += self.sigma * self.sigma * self.eigvals[i] * g * g;
            }
        }
        var
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> Grid {
        Grid::new(1, 1.0, 64, 8.0, 8).unwrap()
    }

    #[test]
    fn covariance_diagonal_and_symmetry() {
        let g = grid1();
        let c = assemble_covariance(&g, 0.08, true).unwrap();
        for a in 0..g.n_space() {
            assert_eq!(c[(a, a)], 1.0);
            for b in 0..g.n_space() {
                assert_eq!(c[(a, b)], c[(b, a)]);
            }
        }
    }

    #[test]
    fn covariance_periodic_distance() {
        // oracle: nodes at 0 and 0.5 sit at periodic distance 0.5
        let g = grid1();
        let c = assemble_covariance(&g, 0.08, true).unwrap();
        let expect = (-(0.5f64 * 0.5) / (0.08 * 0.08)).exp();
        assert!((c[(0, 32)] - expect).abs() < 1e-20);
        // nodes at 0 and 63/64: periodic distance 1/64, much closer
        let near = (-(1.0 / 64.0f64).powi(2) / (0.08 * 0.08)).exp();
        assert!((c[(0, 63)] - near).abs() < 1e-12);
        // plain metric instead sees distance 63/64
        let cp = assemble_covariance(&g, 0.08, false).unwrap();
        assert!(cp[(0, 63)] < 1e-20);
    }

    #[test]
    fn constant_kernel_is_rank_one() {
        let g = grid1();
        let c = assemble_covariance(&g, 1e6, true).unwrap();
        let kl = kl_decompose(&c, &g, 1e6, 0.1, 0.95).unwrap();
        assert_eq!(kl.n_modes, 1);
        assert!(kl.spectrum_fraction > 0.999);
    }

    #[test]
    fn eigvecs_orthonormal() {
        let g = grid1();
        let c = assemble_covariance(&g, 0.08, true).unwrap();
        let kl = kl_decompose(&c, &g, 0.08, 0.1, 0.95).unwrap();
        let sw = g.space_weight();
        for i in 0..kl.n_modes {
            for j in 0..kl.n_modes {
                let dot: f64 = kl.eigvecs[i]
                    .iter()
                    .zip(&kl.eigvecs[j])
                    .map(|(a, b)| sw * a * b)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10, "({i},{j}): {dot}");
            }
        }
    }

    #[test]
    fn full_spectrum_reconstructs_covariance() {
        let g = Grid::new(1, 1.0, 32, 8.0, 8).unwrap();
        let c = assemble_covariance(&g, 0.08, true).unwrap();
        let kl = kl_decompose(&c, &g, 0.08, 0.1, 0.95).unwrap();
        let ns = g.n_space();
        let mut err2 = 0.0;
        let mut ref2 = 0.0;
        for a in 0..ns {
            for b in 0..ns {
                let mut rec = 0.0;
                for i in 0..ns {
                    rec += kl.eigvals[i] * kl.eigvecs[i][a] * kl.eigvecs[i][b];
                }
                err2 += (rec - c[(a, b)]) * (rec - c[(a, b)]);
                ref2 += c[(a, b)] * c[(a, b)];
            }
        }
        assert!((err2 / ref2).sqrt() < 1e-8, "frobenius rel {}", (err2 / ref2).sqrt());
    }

    #[test]
    fn leading_eigenvalue_stable_under_refinement() {
        let g1 = Grid::new(1, 1.0, 128, 8.0, 8).unwrap();
        let g2 = Grid::new(1, 1.0, 256, 8.0, 8).unwrap();
        let kl1 = {
            let c = assemble_covariance(&g1, 0.08, true).unwrap();
            kl_decompose(&c, &g1, 0.08, 0.1, 0.95).unwrap()
        };
        let kl2 = {
            let c = assemble_covariance(&g2, 0.08, true).unwrap();
            kl_decompose(&c, &g2, 0.08, 0.1, 0.95).unwrap()
        };
        let drift = (kl1.eigvals[0] - kl2.eigvals[0]).abs() / kl2.eigvals[0];
        assert!(drift < 1e-3, "leading eigenvalue drift {drift}");
    }

    #[test]
    fn sample_field_zero_and_odd_cancellation() {
        let g = grid1();
        let c = assemble_covariance(&g, 0.08, true).unwrap();
        let kl = kl_decompose(&c, &g, 0.08, 0.1, 0.95).unwrap();
        let z = vec![0.0; kl.n_modes];
        let (f, clamped) = kl.sample_field(&z).unwrap();
        assert_eq!(clamped, 0);
        assert!(f.iter().all(|&v| v == 1.0));
        let z: Vec<f64> = (0..kl.n_modes).map(|i| 0.5 - 0.1 * i as f64).collect();
        let zn: Vec<f64> = z.iter().map(|v| -v).collect();
        let (fp, _) = kl.sample_field(&z).unwrap();
        let (fm, _) = kl.sample_field(&zn).unwrap();
        for (a, b) in fp.iter().zip(fm.iter()) {
            assert!((a + b - 2.0).abs() < 1e-14);
        }
    }
}
