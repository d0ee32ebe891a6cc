use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub type Tensor = [[f64; 2]; 2];

/// How the fracture storage coefficient depends on the width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FractureStorage {
    /// `phi_gamma = d * porosity`.
    Scaled { porosity: f64 },
    /// Width-independent `phi_gamma`.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCoefficients {
    /// Conductivity tensor per subdomain.
    pub conductivity: Vec<Tensor>,
    /// Storage coefficient per subdomain.
    pub storage: Vec<f64>,
    /// Tangential fracture conductivity `K_gamma`.
    pub fracture_conductivity: f64,
    pub fracture_storage: FractureStorage,
}

impl ModelCoefficients {
    pub const DEFAULT_FRACTURE_CONDUCTIVITY: f64 = 100.0;

    /// `K = I`, unit storage, `K_gamma = 100`, `phi_gamma = d`.
    pub fn uniform(n_subdomains: usize) -> Self {
        Self {
            conductivity: vec![[[1.0, 0.0], [0.0, 1.0]]; n_subdomains],
            storage: vec![1.0; n_subdomains],
            fracture_conductivity: Self::DEFAULT_FRACTURE_CONDUCTIVITY,
            fracture_storage: FractureStorage::Scaled { porosity: 1.0 },
        }
    }

    pub fn validate(&self, n_subdomains: usize) -> Result<()> {
        if self.conductivity.len() != n_subdomains || self.storage.len() != n_subdomains {
            return Err(Error::Coefficients(format!(
                "expected coefficients for {n_subdomains} subdomains, got {} conductivities and {} storages",
                self.conductivity.len(),
                self.storage.len()
            )));
        }
        for (i, k) in self.conductivity.iter().enumerate() {
            inverse_spd(k)
                .map_err(|_| Error::Coefficients(format!("conductivity of subdomain {i} is not SPD: {k:?}")))?;
        }
        if let Some(i) = self.storage.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Coefficients(format!("storage of subdomain {i} must be positive")));
        }
        if !(self.fracture_conductivity > 0.0 && self.fracture_conductivity.is_finite()) {
            return Err(Error::Coefficients("fracture conductivity must be positive".into()));
        }
        let phi = match self.fracture_storage {
            FractureStorage::Scaled { porosity } => porosity,
            FractureStorage::Fixed(v) => v,
        };
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::Coefficients("fracture storage must be positive".into()));
        }
        Ok(())
    }

    /// `phi_gamma` for a fracture of width `d`.
    pub fn fracture_storage_for(&self, width: f64) -> f64 {
        match self.fracture_storage {
            FractureStorage::Scaled { porosity } => width * porosity,
            FractureStorage::Fixed(v) => v,
        }
    }
}

/// Inverse of a symmetric positive-definite 2x2 tensor.
pub fn inverse_spd(k: &Tensor) -> Result<Tensor> {
    let sym_tol = 1e-12 * (k[0][1].abs() + k[1][0].abs() + k[0][0].abs() + k[1][1].abs());
    if (k[0][1] - k[1][0]).abs() > sym_tol || k.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Coefficients(format!("tensor {k:?} is not symmetric")));
    }
    let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
    if !(k[0][0] > 0.0 && det > 0.0) {
        return Err(Error::Coefficients(format!("tensor {k:?} is not positive definite")));
    }
    Ok([[k[1][1] / det, -k[0][1] / det], [-k[1][0] / det, k[0][0] / det]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indefinite_conductivity_is_rejected() {
        let mut c = ModelCoefficients::uniform(2);
        c.conductivity[1] = [[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(c.validate(2), Err(Error::Coefficients(_))));
        c.conductivity[1] = [[1.0, 0.5], [0.0, 1.0]];
        assert!(c.validate(2).is_err());
    }

    #[test]
    fn scaled_storage_is_linear_in_width() {
        let c = ModelCoefficients::uniform(1);
        assert!((c.fracture_storage_for(0.001) * 1.0 / 50.0 - 2e-5).abs() < 1e-20);
    }
}
