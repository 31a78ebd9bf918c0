use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the coupled kinetic-fluid system.
///
/// `epsilon` is the Stokes number: `O(1)` is the kinetic regime, `epsilon -> 0`
/// the fluid regime. The solver is expected to remain stable down to `1e-6`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Stokes number, 0 < epsilon <= 1 (accepted down to 1e-6).
    pub epsilon: f64,
    /// Coupling constant (ratio of particle to fluid density), kappa > 0.
    pub kappa: f64,
    /// Reference temperature.
    pub theta_bar: f64,
    /// Number of particle sizes.
    pub n_species: usize,
    /// Perturbation amplitude used by diagnostics and the linearized models.
    pub delta: f64,
    /// Spatial dimension (1 or 2); velocity dimension equals it.
    pub dim: usize,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.theta_bar > 0.0) {
            return Err(Error::InvalidParameter(format!("theta_bar must be > 0, got {}", self.theta_bar)));
        }
        if self.n_species < 1 {
            return Err(Error::InvalidParameter("n_species must be >= 1".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidParameter(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        Ok(())
    }

    /// Particle size of species with 1-based index `i` (sizes are 1, 2, ..., N).
    pub fn size(&self, species: usize) -> f64 {
        debug_assert!(species >= 1 && species <= self.n_species);
        species as f64
    }

    /// Friction scaling `i^{2/3}` multiplying the relaxation time of species `i`.
    pub fn friction_scale(&self, species: usize) -> f64 {
        self.size(species).powf(2.0 / 3.0)
    }

    /// Drag weight `i^{1/3}` of species `i` in the fluid forcing term.
    pub fn drag_weight(&self, species: usize) -> f64 {
        self.size(species).cbrt()
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            epsilon: 1.0,
            kappa: 0.5,
            theta_bar: 1.0,
            n_species: 2,
            delta: 1e-2,
            dim: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_validate() {
        ModelParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        let p = ModelParams { epsilon: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_bad_dim() {
        let p = ModelParams { dim: 3, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn size_powers() {
        let p = ModelParams::default();
        assert!((p.friction_scale(2) - 2f64.powf(2.0 / 3.0)).abs() < 1e-15);
        assert!((p.drag_weight(2) - 2f64.cbrt()).abs() < 1e-15);
    }
}
