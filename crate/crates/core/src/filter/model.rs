use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::DirectFilterModel;
use crate::error::{Error, Result};
use crate::forward::{DiscreteState, PreparedStep, ReducedPropagator};
use crate::observation::lift;

type LoadFn = Box<dyn Fn(usize) -> Vec<f64> + Send + Sync>;

/// Forecasts fracture data by one step of the discrete flow model.
///
/// Only the fracture unknowns are observed. The remaining unknowns come from a
/// companion state that is advanced with the posterior mean after each step.
pub struct FractureFilterModel {
    propagator: Arc<ReducedPropagator>,
    companion: DiscreteState,
    load: LoadFn,
}

impl FractureFilterModel {
    /// Without sources.
    pub fn new(propagator: Arc<ReducedPropagator>, x0: DiscreteState) -> Result<Self> {
        let n_p = propagator.matrices().layout.n_p();
        Self::with_load(propagator, x0, Box::new(move |_| vec![0.0; n_p]))
    }

    /// `load(n)` is the source vector at step `n`.
    pub fn with_load(propagator: Arc<ReducedPropagator>, x0: DiscreteState, load: LoadFn) -> Result<Self> {
        x0.check(&propagator.matrices().layout)?;
        Ok(Self { propagator, companion: x0, load })
    }

    pub fn companion(&self) -> &DiscreteState {
        &self.companion
    }

    pub fn propagator(&self) -> &Arc<ReducedPropagator> {
        &self.propagator
    }
}

impl DirectFilterModel for FractureFilterModel {
    type Step = PreparedStep;

    fn n_params(&self) -> usize {
        self.propagator.matrices().n_fractures()
    }

    fn n_observed(&self) -> usize {
        self.propagator.n_observed()
    }

    fn prepare(&self, n: usize, previous: Option<&[f64]>) -> Result<PreparedStep> {
        let layout = &self.propagator.matrices().layout;
        let prev = match previous {
            Some(y) => lift(layout, y, &self.companion)?,
            None => self.companion.clone(),
        };
        self.propagator.prepare(&prev, &(self.load)(n))
    }

    fn forecast(&self, step: &PreparedStep, theta: &[f64]) -> Result<Vec<f64>> {
        let widths: Vec<f64> = theta.iter().map(|t| 1.0 / t).collect();
        self.propagator.observe_next(step, &widths)
    }

    fn advance(&mut self, step: &PreparedStep, theta_mean: &[f64]) -> Result<()> {
        let widths: Vec<f64> = theta_mean.iter().map(|t| 1.0 / t).collect();
        self.companion = self.propagator.full_next(step, &widths)?;
        Ok(())
    }
}

/// Scalar model `x_{n+1} = theta x_n`, observed directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGrowthModel {
    pub x0: f64,
}

impl ScalarGrowthModel {
    pub fn trajectory(&self, theta: f64, n_steps: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n_steps + 1);
        let mut x = self.x0;
        out.push(x);
        for _ in 0..n_steps {
            x *= theta;
            out.push(x);
        }
        out
    }
}

impl DirectFilterModel for ScalarGrowthModel {
    type Step = f64;

    fn n_params(&self) -> usize {
        1
    }

    fn n_observed(&self) -> usize {
        1
    }

    fn prepare(&self, _n: usize, previous: Option<&[f64]>) -> Result<f64> {
        match previous {
            None => Ok(self.x0),
            Some([y]) => Ok(*y),
            Some(y) => Err(Error::Dimension { expected: 1, found: y.len() }),
        }
    }

    fn forecast(&self, step: &f64, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![theta[0] * step])
    }

    fn advance(&mut self, _step: &f64, _theta_mean: &[f64]) -> Result<()> {
        Ok(())
    }
}
