use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

/// Per-instance FFT workspace for the periodic spatial mesh.
///
/// Provides the Leray projection, the implicit (exact-in-time) heat solve and
/// the spectral divergence used by the incompressibility diagnostics. All
/// transforms are dense complex FFTs; the meshes here are small enough that
/// real-to-complex optimizations are not worth the bookkeeping.
pub struct Spectral {
    dim: usize,
    n_x: Vec<usize>,
    /// Signed angular wavenumbers per dimension (Nyquist mapped to 0).
    k: Vec<Vec<f64>>,
    /// Unsigned angular wavenumber magnitudes per dimension.
    k_abs: Vec<Vec<f64>>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl Spectral {
    pub fn new(grid: &Grid) -> Spectral {
        let mut planner = FftPlanner::new();
        let mut k = Vec::new();
        let mut k_abs = Vec::new();
        let mut fwd = Vec::new();
        let mut inv = Vec::new();
        for d in 0..grid.dim {
            let n = grid.n_x[d];
            let l = grid.x_len[d];
            let kd: Vec<f64> = (0..n)
                .map(|m| {
                    // the unpaired Nyquist mode has no well-defined signed
                    // wavenumber; use 0 so derivative operators stay real
                    let ms = if n % 2 == 0 && m == n / 2 {
                        0
                    } else if m <= n / 2 {
                        m as isize
                    } else {
                        m as isize - n as isize
                    };
                    2.0 * std::f64::consts::PI * ms as f64 / l
                })
                .collect();
            let ka: Vec<f64> = (0..n)
                .map(|m| {
                    let ms = if m <= n / 2 { m } else { n - m };
                    2.0 * std::f64::consts::PI * ms as f64 / l
                })
                .collect();
            k.push(kd);
            k_abs.push(ka);
            fwd.push(planner.plan_fft_forward(n));
            inv.push(planner.plan_fft_inverse(n));
        }
        Spectral {
            dim: grid.dim,
            n_x: grid.n_x.clone(),
            k,
            k_abs,
            fwd,
            inv,
        }
    }

    fn n_space(&self) -> usize {
        self.n_x.iter().product()
    }

    pub fn forward(&self, field: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = field.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.transform(&mut buf, true);
        buf
    }

    pub fn inverse_into(&self, hat: &mut [Complex<f64>], out: &mut [f64]) {
        self.transform(hat, false);
        let scale = 1.0 / self.n_space() as f64;
        for (o, h) in out.iter_mut().zip(hat.iter()) {
            *o = h.re * scale;
        }
    }

    fn transform(&self, buf: &mut [Complex<f64>], forward: bool) {
        let n0 = self.n_x[0];
        let plan0 = if forward { &self.fwd[0] } else { &self.inv[0] };
        for row in buf.chunks_exact_mut(n0) {
            plan0.process(row);
        }
        if self.dim == 2 {
            let n1 = self.n_x[1];
            let plan1 = if forward { &self.fwd[1] } else { &self.inv[1] };
            let mut col = vec![Complex::new(0.0, 0.0); n1];
            for i0 in 0..n0 {
                for i1 in 0..n1 {
                    col[i1] = buf[i0 + n0 * i1];
                }
                plan1.process(&mut col);
                for i1 in 0..n1 {
                    buf[i0 + n0 * i1] = col[i1];
                }
            }
        }
    }

    fn is_nyquist(&self, a: usize) -> bool {
        let m0 = a % self.n_x[0];
        if self.n_x[0] % 2 == 0 && m0 == self.n_x[0] / 2 {
            return true;
        }
        if self.dim == 2 {
            let m1 = a / self.n_x[0];
            if self.n_x[1] % 2 == 0 && m1 == self.n_x[1] / 2 {
                return true;
            }
        }
        false
    }

    fn wavevector(&self, a: usize) -> [f64; 2] {
        let m0 = a % self.n_x[0];
        let mut kv = [self.k[0][m0], 0.0];
        if self.dim == 2 {
            let m1 = a / self.n_x[0];
            kv[1] = self.k[1][m1];
        }
        kv
    }

    /// Leray projection of the first `dim` columns of `u` onto divergence-free
    /// fields. If `pressure` is given, it receives the pressure field such
    /// that `u_in = u_out + dt * grad p`.
    pub fn project(&self, u: &mut Array2<f64>, pressure: Option<(&mut Array1<f64>, f64)>) {
        let ns = self.n_space();
        let mut hats: Vec<Vec<Complex<f64>>> = (0..self.dim)
            .map(|c| self.forward(u.column(c).to_owned().as_slice().unwrap()))
            .collect();
        let mut p_hat = vec![Complex::new(0.0, 0.0); ns];
        for a in 0..ns {
            // kill the unpaired Nyquist modes: they have no consistent
            // solenoidal representation and would break realness
            if self.is_nyquist(a) {
                for c in 0..self.dim {
                    hats[c][a] = Complex::new(0.0, 0.0);
                }
                continue;
            }
            let kv = self.wavevector(a);
            let k2 = kv[0] * kv[0] + kv[1] * kv[1];
            if k2 == 0.0 {
                continue;
            }
            let mut kdot = Complex::new(0.0, 0.0);
            for c in 0..self.dim {
                kdot += hats[c][a] * kv[c];
            }
            for c in 0..self.dim {
                hats[c][a] -= kdot * kv[c] / k2;
            }
            // u_in - u_out = (k k.u / k^2); equate with dt * i k p_hat
            p_hat[a] = kdot / Complex::new(0.0, k2);
        }
        let mut scratch = vec![0.0; ns];
        for c in 0..self.dim {
            self.inverse_into(&mut hats[c], &mut scratch);
            for (a, &v) in scratch.iter().enumerate() {
                u[(a, c)] = v;
            }
        }
        if let Some((p, dt)) = pressure {
            for h in p_hat.iter_mut() {
                *h /= dt;
            }
            self.inverse_into(&mut p_hat, &mut scratch);
            for (a, &v) in scratch.iter().enumerate() {
                p[a] = v;
            }
        }
    }

    /// Exact-in-time heat step: multiply every mode by `exp(-|k|^2 nu dt)`.
    pub fn heat_step(&self, field: &mut [f64], nu_dt: f64) {
        let mut hat = self.forward(field);
        for (a, h) in hat.iter_mut().enumerate() {
            let m0 = a % self.n_x[0];
            let mut k2 = self.k_abs[0][m0] * self.k_abs[0][m0];
            if self.dim == 2 {
                let m1 = a / self.n_x[0];
                k2 += self.k_abs[1][m1] * self.k_abs[1][m1];
            }
            *h *= (-k2 * nu_dt).exp();
        }
        self.inverse_into(&mut hat, field);
    }

    /// Spectral gradient of a scalar field, one column per dimension.
    pub fn gradient(&self, field: &[f64]) -> Array2<f64> {
        let ns = self.n_space();
        let hat = self.forward(field);
        let mut out = Array2::zeros((ns, self.dim));
        let mut comp = vec![Complex::new(0.0, 0.0); ns];
        let mut scratch = vec![0.0; ns];
        for c in 0..self.dim {
            for a in 0..ns {
                let kv = self.wavevector(a);
                comp[a] = Complex::new(0.0, kv[c]) * hat[a];
            }
            self.inverse_into(&mut comp, &mut scratch);
            for (a, &v) in scratch.iter().enumerate() {
                out[(a, c)] = v;
            }
        }
        out
    }

    /// Apply a real Fourier multiplier `scale(|k|^2)` (with the Nyquist-zeroed
    /// derivative wavenumbers, so the result is consistent with `gradient`
    /// and `divergence`).
    pub fn mode_scale_into(&self, field: &[f64], out: &mut [f64], scale: impl Fn(f64) -> f64) {
        let mut hat = self.forward(field);
        for (a, h) in hat.iter_mut().enumerate() {
            let kv = self.wavevector(a);
            let k2 = kv[0] * kv[0] + kv[1] * kv[1];
            *h *= scale(k2);
        }
        self.inverse_into(&mut hat, out);
    }

    /// Spectral Laplacian (derivative-consistent: `-G^T G` with `G` the
    /// spectral gradient).
    pub fn laplacian_into(&self, field: &[f64], out: &mut [f64]) {
        self.mode_scale_into(field, out, |k2| -k2);
    }

    /// Solve `-laplace(out) = field` with zero-mean right-hand side and
    /// zero-mean solution (spectral pseudo-inverse; Nyquist modes dropped).
    pub fn neg_inv_laplacian(&self, field: &[f64], out: &mut [f64]) {
        self.mode_scale_into(field, out, |k2| if k2 == 0.0 { 0.0 } else { 1.0 / k2 });
    }

    /// Spectral divergence of the first `dim` columns of `u`.
    pub fn divergence(&self, u: &Array2<f64>) -> Array1<f64> {
        let ns = self.n_space();
        let mut div_hat = vec![Complex::new(0.0, 0.0); ns];
        for c in 0..self.dim {
            let hat = self.forward(u.column(c).to_owned().as_slice().unwrap());
            for a in 0..ns {
                let kv = self.wavevector(a);
                div_hat[a] += Complex::new(0.0, kv[c]) * hat[a];
            }
        }
        let mut out = Array1::zeros(ns);
        self.inverse_into(&mut div_hat, out.as_slice_mut().unwrap());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn grid2() -> Grid {
        Grid::new(2, 1.0, 16, 8.0, 8).unwrap()
    }

    #[test]
    fn forward_inverse_round_trip() {
        let g = Grid::new(1, 1.0, 32, 8.0, 8).unwrap();
        let sp = Spectral::new(&g);
        let field: Vec<f64> = (0..32).map(|a| (a as f64 * 0.37).sin() + 0.2).collect();
        let mut hat = sp.forward(&field);
        let mut back = vec![0.0; 32];
        sp.inverse_into(&mut hat, &mut back);
        for (x, y) in field.iter().zip(&back) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_kills_gradient_keeps_solenoidal_2d() {
        let g = grid2();
        let sp = Spectral::new(&g);
        let ns = g.n_space();
        let mut u = Array2::zeros((ns, 2));
        let two_pi = 2.0 * std::f64::consts::PI;
        for a in 0..ns {
            let x = g.x_coord(a, 0);
            let y = g.x_coord(a, 1);
            // gradient part + stream-function (solenoidal) part
            let grad = ((two_pi * x).cos() * (two_pi * y).sin(), (two_pi * x).sin() * (two_pi * y).cos());
            let sol = ((two_pi * y).sin(), 0.7 * (two_pi * x).sin());
            u[(a, 0)] = grad.0 + sol.0;
            u[(a, 1)] = grad.1 + sol.1;
        }
        sp.project(&mut u, None);
        let div = sp.divergence(&u);
        let max_div = div.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(max_div < 1e-11, "div after projection: {max_div}");
        for a in 0..ns {
            let x = g.x_coord(a, 0);
            let y = g.x_coord(a, 1);
            assert!((u[(a, 0)] - (two_pi * y).sin()).abs() < 1e-11);
            assert!((u[(a, 1)] - 0.7 * (two_pi * x).sin()).abs() < 1e-11);
        }
    }

    #[test]
    fn projection_idempotent() {
        let g = grid2();
        let sp = Spectral::new(&g);
        let ns = g.n_space();
        let mut u = Array2::from_shape_fn((ns, 2), |(a, c)| ((a * 7 + c * 3) as f64 * 0.61).sin());
        sp.project(&mut u, None);
        let once = u.clone();
        sp.project(&mut u, None);
        let diff = (&u - &once).iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(diff < 1e-13, "second projection moved the field by {diff}");
    }

    #[test]
    fn heat_step_decays_single_mode_exactly() {
        let g = Grid::new(1, 1.0, 64, 8.0, 8).unwrap();
        let sp = Spectral::new(&g);
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut field: Vec<f64> = (0..64).map(|a| (two_pi * a as f64 / 64.0).sin()).collect();
        sp.heat_step(&mut field, 0.01);
        let factor = (-two_pi * two_pi * 0.01).exp();
        for (a, &x) in field.iter().enumerate() {
            let expect = factor * (two_pi * a as f64 / 64.0).sin();
            assert!((x - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_1d_reduces_to_mean() {
        let g = Grid::new(1, 1.0, 32, 8.0, 8).unwrap();
        let sp = Spectral::new(&g);
        let mut u = Array2::from_shape_fn((32, 1), |(a, _)| 1.5 + (a as f64 * 0.3).sin());
        let mean = u.column(0).sum() / 32.0;
        sp.project(&mut u, None);
        for a in 0..32 {
            assert!((u[(a, 0)] - mean).abs() < 1e-13);
        }
    }
}
