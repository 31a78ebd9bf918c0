use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable description of a phase-space grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    /// Periodic box length per spatial dimension.
    pub x_len: Vec<f64>,
    /// Grid points per spatial dimension.
    pub n_x: Vec<usize>,
    /// Velocity box half-width; the velocity domain is [-l_v, l_v]^dim.
    pub l_v: f64,
    /// Velocity nodes per dimension.
    pub n_v: usize,
}

/// Structured grid: uniform periodic nodes in x, uniform trapezoid nodes in v.
///
/// Spatial nodes sit at `a * dx` (the right endpoint is identified with 0),
/// velocity nodes at `-l_v + j * dv` including both endpoints. Velocity
/// quadrature is the trapezoid rule; spatial quadrature is the (exact on the
/// torus) uniform rule with weight `dx` per node and dimension.
#[derive(Debug, Clone)]
pub struct Grid {
    pub dim: usize,
    pub x_len: Vec<f64>,
    pub n_x: Vec<usize>,
    pub l_v: f64,
    pub n_v: usize,
    pub dx: Vec<f64>,
    pub dv: f64,
    v_nodes_1d: Vec<f64>,
    v_w_1d: Vec<f64>,
    v_weights: Vec<f64>,
    v_comp: Vec<Vec<f64>>,
}

impl Grid {
    pub fn new(dim: usize, x_len: f64, n_x: usize, l_v: f64, n_v: usize) -> Result<Grid> {
        Grid::from_spec(&GridSpec {
            dim,
            x_len: vec![x_len; dim],
            n_x: vec![n_x; dim],
            l_v,
            n_v,
        })
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Grid> {
        if spec.dim != 1 && spec.dim != 2 {
            return Err(Error::InvalidParameter(format!("grid dim must be 1 or 2, got {}", spec.dim)));
        }
        if spec.x_len.len() != spec.dim || spec.n_x.len() != spec.dim {
            return Err(Error::InvalidParameter("x_len/n_x length must equal dim".into()));
        }
        if spec.x_len.iter().any(|&l| !(l > 0.0)) || spec.n_x.iter().any(|&n| n < 4) {
            return Err(Error::InvalidParameter("need x_len > 0 and n_x >= 4".into()));
        }
        if !(spec.l_v > 0.0) || spec.n_v < 4 {
            return Err(Error::InvalidParameter("need l_v > 0 and n_v >= 4".into()));
        }
        let dx: Vec<f64> = spec
            .x_len
            .iter()
            .zip(&spec.n_x)
            .map(|(&l, &n)| l / n as f64)
            .collect();
        let dv = 2.0 * spec.l_v / (spec.n_v - 1) as f64;
        let v_nodes_1d: Vec<f64> = (0..spec.n_v).map(|j| -spec.l_v + j as f64 * dv).collect();
        let mut v_w_1d = vec![dv; spec.n_v];
        v_w_1d[0] = 0.5 * dv;
        v_w_1d[spec.n_v - 1] = 0.5 * dv;

        let n_vel = spec.n_v.pow(spec.dim as u32);
        let mut v_weights = vec![0.0; n_vel];
        let mut v_comp = vec![vec![0.0; n_vel]; spec.dim];
        for j in 0..n_vel {
            let mut w = 1.0;
            let mut rem = j;
            for d in 0..spec.dim {
                let jd = rem % spec.n_v;
                rem /= spec.n_v;
                w *= v_w_1d[jd];
                v_comp[d][j] = v_nodes_1d[jd];
            }
            v_weights[j] = w;
        }

        Ok(Grid {
            dim: spec.dim,
            x_len: spec.x_len.clone(),
            n_x: spec.n_x.clone(),
            l_v: spec.l_v,
            n_v: spec.n_v,
            dx,
            dv,
            v_nodes_1d,
            v_w_1d,
            v_weights,
            v_comp,
        })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dim: self.dim,
            x_len: self.x_len.clone(),
            n_x: self.n_x.clone(),
            l_v: self.l_v,
            n_v: self.n_v,
        }
    }

    /// Total number of spatial nodes.
    pub fn n_space(&self) -> usize {
        self.n_x.iter().product()
    }

    /// Total number of velocity nodes.
    pub fn n_vel(&self) -> usize {
        self.n_v.pow(self.dim as u32)
    }

    /// Volume of the periodic spatial box.
    pub fn space_volume(&self) -> f64 {
        self.x_len.iter().product()
    }

    /// Quadrature weight of every spatial node (uniform rule on the torus).
    pub fn space_weight(&self) -> f64 {
        self.dx.iter().product()
    }

    /// 1D velocity nodes (shared across velocity dimensions).
    pub fn v_nodes_1d(&self) -> &[f64] {
        &self.v_nodes_1d
    }

    /// 1D trapezoid weights.
    pub fn v_w_1d(&self) -> &[f64] {
        &self.v_w_1d
    }

    /// Flattened velocity quadrature weights (product trapezoid rule).
    pub fn v_weights(&self) -> &[f64] {
        &self.v_weights
    }

    /// Component `d` of the flattened velocity node `j`.
    pub fn v_component(&self, d: usize) -> &[f64] {
        &self.v_comp[d]
    }

    /// Spatial coordinate of node `a` along dimension `d`.
    pub fn x_coord(&self, a: usize, d: usize) -> f64 {
        let mut rem = a;
        for dd in 0..d {
            rem /= self.n_x[dd];
        }
        (rem % self.n_x[d]) as f64 * self.dx[d]
    }

    /// Decompose a flat spatial index into per-dimension indices.
    pub fn x_multi_index(&self, a: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim);
        let mut rem = a;
        for d in 0..self.dim {
            out.push(rem % self.n_x[d]);
            rem /= self.n_x[d];
        }
        out
    }

    /// Flat spatial index from per-dimension indices.
    pub fn x_flat_index(&self, idx: &[usize]) -> usize {
        let mut a = 0;
        let mut stride = 1;
        for d in 0..self.dim {
            a += idx[d] * stride;
            stride *= self.n_x[d];
        }
        a
    }

    /// Stride in the flat spatial index corresponding to dimension `d`.
    pub fn x_stride(&self, d: usize) -> usize {
        self.n_x[..d].iter().product()
    }

    /// Largest velocity magnitude in the 1-norm, used in the CFL bound.
    pub fn v_max_l1(&self) -> f64 {
        self.dim as f64 * self.l_v
    }

    /// Coarsen the spatial mesh by an integer factor; velocity grid is kept.
    pub fn coarsen(&self, factor: usize) -> Result<Grid> {
        if factor == 0 || self.n_x.iter().any(|&n| n % factor != 0) {
            return Err(Error::InvalidParameter(format!(
                "coarsening factor {factor} does not divide n_x {:?}",
                self.n_x
            )));
        }
        Grid::from_spec(&GridSpec {
            dim: self.dim,
            x_len: self.x_len.clone(),
            n_x: self.n_x.iter().map(|&n| n / factor).collect(),
            l_v: self.l_v,
            n_v: self.n_v,
        })
    }

    /// Integer refinement factor of `self` relative to `coarse`, if nested.
    pub fn refinement_factor(&self, coarse: &Grid) -> Result<usize> {
        if self.dim != coarse.dim || self.x_len != coarse.x_len {
            return Err(Error::NonNestedGrids("domain mismatch".into()));
        }
        let f = self.n_x[0] / coarse.n_x[0];
        for d in 0..self.dim {
            if coarse.n_x[d] * f != self.n_x[d] || f == 0 {
                return Err(Error::NonNestedGrids(format!(
                    "{:?} does not refine {:?}",
                    self.n_x, coarse.n_x
                )));
            }
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_domain_volumes() {
        let g = Grid::new(1, 1.0, 32, 8.0, 32).unwrap();
        let sv: f64 = g.space_weight() * g.n_space() as f64;
        assert!((sv - 1.0).abs() < 1e-14);
        let vv: f64 = g.v_weights().iter().sum();
        assert!((vv - 16.0).abs() < 1e-12);

        let g2 = Grid::new(2, 1.0, 8, 8.0, 16).unwrap();
        let vv2: f64 = g2.v_weights().iter().sum();
        assert!((vv2 - 256.0).abs() < 1e-10);
    }

    #[test]
    fn velocity_grid_symmetric() {
        let g = Grid::new(1, 1.0, 16, 8.0, 32).unwrap();
        let n = g.n_v;
        for j in 0..n {
            assert!((g.v_nodes_1d()[j] + g.v_nodes_1d()[n - 1 - j]).abs() < 1e-14);
        }
        // odd moment of the weights vanishes by symmetry
        let m1: f64 = (0..n).map(|j| g.v_w_1d()[j] * g.v_nodes_1d()[j]).sum();
        assert!(m1.abs() < 1e-13);
    }

    #[test]
    fn flat_index_round_trip_2d() {
        let g = Grid::new(2, 1.0, 8, 8.0, 8).unwrap();
        for a in 0..g.n_space() {
            let idx = g.x_multi_index(a);
            assert_eq!(g.x_flat_index(&idx), a);
        }
        assert_eq!(g.x_stride(0), 1);
        assert_eq!(g.x_stride(1), 8);
    }

    #[test]
    fn coarsen_and_refinement_factor() {
        let g = Grid::new(1, 1.0, 64, 8.0, 32).unwrap();
        let c = g.coarsen(4).unwrap();
        assert_eq!(c.n_x[0], 16);
        assert_eq!(g.refinement_factor(&c).unwrap(), 4);
        assert!(g.coarsen(5).is_err());
    }
}
