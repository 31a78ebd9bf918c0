use ndarray::{Array1, Array2, Array3};

/// Full phase-space state of the coupled kinetic-fluid system.
///
/// `f[s]` is the distribution of species `s+1` with shape
/// `(n_space, n_vel)`; `u` the fluid velocity `(n_space, dim)`; `p` the
/// pressure. The fluid velocity is kept discretely divergence-free by the
/// spectral projection after every step.
#[derive(Debug, Clone)]
pub struct KineticState {
    pub f: Vec<Array2<f64>>,
    pub u: Array2<f64>,
    pub p: Array1<f64>,
    pub t: f64,
}

impl KineticState {
    pub fn n_species(&self) -> usize {
        self.f.len()
    }

    /// True if any field contains a non-finite entry.
    pub fn has_nan(&self) -> bool {
        self.f.iter().any(|f| f.iter().any(|x| !x.is_finite()))
            || self.u.iter().any(|x| !x.is_finite())
            || self.p.iter().any(|x| !x.is_finite())
    }
}

/// Velocity moments of a kinetic state.
///
/// `n[s]` is the number density, `j[s] = i * int v F_i dv` the momentum
/// density and `stress[s] = i * int v (x) v F_i dv` the stress tensor of
/// species `s+1`; `rho = sum_i i n_i` the composite mass density.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub n: Vec<Array1<f64>>,
    pub j: Vec<Array2<f64>>,
    pub stress: Vec<Array3<f64>>,
    pub rho: Array1<f64>,
}

impl MomentSet {
    /// Mass density `rho_i = i * n_i` of species with 1-based index `i`.
    pub fn rho_i(&self, species: usize) -> Array1<f64> {
        &self.n[species - 1] * species as f64
    }
}

/// Macroscopic state of the hydrodynamic-limit model.
///
/// `u` has `dim` coordinate components; an optional trailing column is a
/// transverse component (advected and diffused, automatically solenoidal),
/// which is how shear modes are represented on a 1D periodic mesh.
#[derive(Debug, Clone)]
pub struct FluidState {
    pub n: Vec<Array1<f64>>,
    pub u: Array2<f64>,
    pub p: Array1<f64>,
    pub t: f64,
}

impl FluidState {
    pub fn n_species(&self) -> usize {
        self.n.len()
    }

    /// Composite mass density `rho = sum_i i n_i`.
    pub fn rho(&self) -> Array1<f64> {
        let mut rho = Array1::zeros(self.n[0].len());
        for (s, n) in self.n.iter().enumerate() {
            rho += &(n * (s + 1) as f64);
        }
        rho
    }

    pub fn has_nan(&self) -> bool {
        self.n.iter().any(|n| n.iter().any(|x| !x.is_finite())) || self.u.iter().any(|x| !x.is_finite())
    }
}

/// Perturbation state of the linearized (acoustic) low-fidelity model:
/// densities `n_i = 1 + delta * n_tilde_i`, velocity `u = delta * u_tilde`.
#[derive(Debug, Clone)]
pub struct AcousticState {
    pub n_tilde: Vec<Array1<f64>>,
    pub u_tilde: Array2<f64>,
    pub p_tilde: Array1<f64>,
    pub t: f64,
}
