//! Observation of the fracture unknowns and synthetic data.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::assembly::DofLayout;
use crate::error::{Error, Result};
use crate::forward::DiscreteState;

/// `H X`: fracture fluxes followed by fracture pressures.
pub fn observe(layout: &DofLayout, x: &DiscreteState) -> Vec<f64> {
    layout.observed().into_iter().map(|i| x.values[i]).collect()
}

/// `companion` with its observed coordinates replaced by `y`.
pub fn lift(layout: &DofLayout, y: &[f64], companion: &DiscreteState) -> Result<DiscreteState> {
    if y.len() != layout.n_observed() {
        return Err(Error::Dimension { expected: layout.n_observed(), found: y.len() });
    }
    if companion.values.len() != layout.len() {
        return Err(Error::Dimension { expected: layout.len(), found: companion.values.len() });
    }
    let mut out = companion.clone();
    for (i, v) in layout.observed().into_iter().zip(y) {
        out.values[i] = *v;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    /// `(n, Y_n)` for `n = 1..=N`.
    pub records: Vec<(usize, Vec<f64>)>,
    /// Diagonal of the noise covariance.
    pub variance: Vec<f64>,
    pub seed: u64,
}

impl ObservationSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.variance.len()
    }

    /// `Y_n`, if recorded.
    pub fn at(&self, n: usize) -> Option<&[f64]> {
        self.records.iter().find(|(k, _)| *k == n).map(|(_, y)| y.as_slice())
    }
}

/// `Y_n = H X_n + xi_n`, `xi_n ~ N(0, diag(variance))`, for every state after
/// the first. A scalar variance may be passed as a one-element slice.
pub fn make_synthetic(
    layout: &DofLayout,
    trajectory: &[DiscreteState],
    variance: &[f64],
    seed: u64,
) -> Result<ObservationSeries> {
    let m = layout.n_observed();
    let variance: Vec<f64> = match variance.len() {
        1 => alloc::vec![variance[0]; m],
        n if n == m => variance.to_vec(),
        n => return Err(Error::Dimension { expected: m, found: n }),
    };
    if variance.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::FilterConfig("noise variance must be non-negative".into()));
    }
    let std: Vec<f64> = variance.iter().map(|&v| libm::sqrt(v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(trajectory.len().saturating_sub(1));
    for x in trajectory.iter().skip(1) {
        let mut y = observe(layout, x);
        for (yi, s) in y.iter_mut().zip(&std) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *yi += s * z;
        }
        records.push((x.step, y));
    }
    Ok(ObservationSeries { records, variance, seed })
}
