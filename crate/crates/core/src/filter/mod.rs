//! Direct particle filter for time-independent parameters.
//!
//! The parameters follow artificial dynamics `theta_{n+1} = theta_n + eps_n`.
//! Each step jitters the particles, weights them by how well a one-step
//! forecast from the previous observation matches the new one, and resamples.

mod model;

pub use model::{FractureFilterModel, ScalarGrowthModel};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::observation::ObservationSeries;

/// Initial particle distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Point(Vec<f64>),
    /// Independent uniform components on `[low_k, high_k]`.
    Uniform {
        low: Vec<f64>,
        high: Vec<f64>,
    },
    /// Independent normal components; draws below the positivity floor are
    /// redrawn when `truncate` is set and rejected otherwise.
    Normal {
        mean: Vec<f64>,
        std: Vec<f64>,
        truncate: bool,
    },
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::Point(v) => v.len(),
            Prior::Uniform { low, .. } => low.len(),
            Prior::Normal { mean, .. } => mean.len(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Prior::Point(v) => v.clone(),
            Prior::Uniform { low, high } => low.iter().zip(high).map(|(a, b)| 0.5 * (a + b)).collect(),
            Prior::Normal { mean, .. } => mean.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Number of particles `M`.
    pub particles: usize,
    /// Diagonal of the exploration covariance of `eps_n`.
    pub exploration: Vec<f64>,
    /// Diagonal of `R` in the likelihood; one value is broadcast.
    pub likelihood_variance: Vec<f64>,
    /// Posterior means of steps `1..=burn_in` are left out of the averaged estimate.
    pub burn_in: usize,
    pub prior: Prior,
    /// Particles are reflected at this value to stay positive.
    pub floor: f64,
    pub seed: u64,
}

impl FilterConfig {
    pub fn validate(&self, n_params: usize, n_steps: usize) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::FilterConfig(msg));
        if self.particles < 2 {
            return bad(format!("need at least 2 particles, got {}", self.particles));
        }
        if self.exploration.len() != n_params || self.prior.dim() != n_params {
            return bad(format!(
                "expected {n_params} parameters, exploration has {} and prior {}",
                self.exploration.len(),
                self.prior.dim()
            ));
        }
        if self.exploration.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return bad("exploration variances must be non-negative".into());
        }
        if self.likelihood_variance.is_empty() || self.likelihood_variance.iter().any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return bad("likelihood variances must be positive".into());
        }
        if n_steps > 0 && self.burn_in >= n_steps {
            return bad(format!("burn-in {} must be below the number of steps {n_steps}", self.burn_in));
        }
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return bad("positivity floor must be positive".into());
        }
        match &self.prior {
            Prior::Point(v) => {
                if v.iter().any(|&x| !(x >= self.floor)) {
                    return bad("point prior below the positivity floor".into());
                }
            }
            Prior::Uniform { low, high } => {
                if low.len() != high.len() || low.iter().zip(high).any(|(a, b)| !(a <= b)) {
                    return bad("uniform prior needs low <= high".into());
                }
                if low.iter().any(|&a| !(a > 0.0)) {
                    return bad("uniform prior puts mass on non-positive values".into());
                }
            }
            Prior::Normal { mean, std, truncate } => {
                if mean.len() != std.len() || std.iter().any(|&s| !(s >= 0.0)) {
                    return bad("normal prior needs non-negative standard deviations".into());
                }
                if !truncate && std.iter().any(|&s| s > 0.0) {
                    return bad("normal prior puts mass on non-positive values; enable truncation".into());
                }
            }
        }
        Ok(())
    }

    /// `R` expanded to `dim` entries.
    pub fn likelihood_diag(&self, dim: usize) -> Result<Vec<f64>> {
        match self.likelihood_variance.len() {
            1 => Ok(vec![self.likelihood_variance[0]; dim]),
            n if n == dim => Ok(self.likelihood_variance.clone()),
            n => Err(Error::Dimension { expected: dim, found: n }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub step: usize,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles.first().map_or(0, Vec::len)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (p, w) in self.particles.iter().zip(&self.weights) {
            for (mk, pk) in m.iter_mut().zip(p) {
                *mk += w * pk;
            }
        }
        m
    }

    /// Weighted standard deviation per component.
    pub fn spread(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut v = vec![0.0; self.dim()];
        for (p, w) in self.particles.iter().zip(&self.weights) {
            for ((vk, pk), mk) in v.iter_mut().zip(p).zip(&mean) {
                *vk += w * (pk - mk) * (pk - mk);
            }
        }
        v.into_iter().map(libm::sqrt).collect()
    }

    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

const TAG_PRIOR: u64 = 1;
const TAG_JITTER: u64 = 2;
const TAG_RESAMPLE: u64 = 3;

/// Independent, seekable stream for `(purpose, step, particle)`, so draws do
/// not depend on how particles are scheduled.
fn stream(seed: u64, tag: u64, step: usize, particle: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 48) ^ step as u64);
    rng.set_word_pos((particle as u128) << 20);
    rng
}

fn reflect(v: f64, floor: f64) -> f64 {
    if v < floor {
        floor + (floor - v)
    } else {
        v
    }
}

pub fn init_ensemble(cfg: &FilterConfig) -> Result<ParticleEnsemble> {
    cfg.validate(cfg.prior.dim(), 0)?;
    let m = cfg.particles;
    let particles = (0..m)
        .map(|i| {
            let mut rng = stream(cfg.seed, TAG_PRIOR, 0, i);
            match &cfg.prior {
                Prior::Point(v) => v.clone(),
                Prior::Uniform { low, high } => low
                    .iter()
                    .zip(high)
                    .map(|(&a, &b)| if a == b { a } else { Uniform::new_inclusive(a, b).unwrap().sample(&mut rng) })
                    .collect(),
                Prior::Normal { mean, std, .. } => mean
                    .iter()
                    .zip(std)
                    .map(|(&mu, &s)| loop {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let v = mu + s * z;
                        if v >= cfg.floor {
                            break v;
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(ParticleEnsemble { particles, weights: vec![1.0 / m as f64; m], step: 0 })
}

/// `theta + eps`, `eps ~ N(0, diag(exploration))`, reflected at `floor`.
pub fn predict(ens: &ParticleEnsemble, exploration: &[f64], floor: f64, seed: u64) -> ParticleEnsemble {
    let std: Vec<f64> = exploration.iter().map(|&v| libm::sqrt(v)).collect();
    let particles = ens
        .particles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = stream(seed, TAG_JITTER, ens.step + 1, i);
            p.iter()
                .zip(&std)
                .map(|(&x, &s)| {
                    if s == 0.0 {
                        return x;
                    }
                    let z: f64 = StandardNormal.sample(&mut rng);
                    reflect(x + s * z, floor)
                })
                .collect()
        })
        .collect();
    ParticleEnsemble { particles, weights: ens.weights.clone(), step: ens.step + 1 }
}

/// `-1/2 ||predicted - observed||^2_R` with diagonal `R`.
pub fn log_likelihood(predicted: &[f64], observed: &[f64], r_diag: &[f64]) -> f64 {
    let s: f64 = predicted.iter().zip(observed).zip(r_diag).map(|((p, y), r)| (p - y) * (p - y) / r).sum();
    -0.5 * s
}

/// `exp(-1/2 ||predicted - observed||^2_R)`, in `(0, 1]`.
pub fn likelihood(predicted: &[f64], observed: &[f64], r_diag: &[f64]) -> f64 {
    libm::exp(log_likelihood(predicted, observed, r_diag))
}

/// Normalizes raw non-negative weights.
pub fn normalize_weights(raw: &[f64], step: usize) -> Result<Vec<f64>> {
    let total: f64 = raw.iter().filter(|w| w.is_finite() && **w > 0.0).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Divergence { step });
    }
    Ok(raw.iter().map(|&w| if w.is_finite() && w > 0.0 { w / total } else { 0.0 }).collect())
}

/// Normalizes log-weights, shifting by the maximum first so that tiny
/// likelihoods do not underflow.
pub fn normalize_log_weights(log_w: &[f64], step: usize) -> Result<Vec<f64>> {
    let max = log_w.iter().cloned().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Divergence { step });
    }
    let raw: Vec<f64> = log_w.iter().map(|&l| if l.is_nan() { 0.0 } else { libm::exp(l - max) }).collect();
    normalize_weights(&raw, step)
}

/// Attaches normalized weights to the prior particles.
pub fn update(prior: ParticleEnsemble, raw_weights: &[f64]) -> Result<ParticleEnsemble> {
    if raw_weights.len() != prior.len() {
        return Err(Error::Dimension { expected: prior.len(), found: raw_weights.len() });
    }
    let weights = normalize_weights(raw_weights, prior.step)?;
    Ok(ParticleEnsemble { weights, ..prior })
}

/// Multinomial resampling to `M` equally weighted particles.
pub fn resample(ens: &ParticleEnsemble, seed: u64) -> Result<ParticleEnsemble> {
    let m = ens.len();
    let index = WeightedIndex::new(&ens.weights).map_err(|_| Error::Divergence { step: ens.step })?;
    let mut rng = stream(seed, TAG_RESAMPLE, ens.step, 0);
    let particles = (0..m).map(|_| ens.particles[index.sample(&mut rng)].clone()).collect();
    Ok(ParticleEnsemble { particles, weights: vec![1.0 / m as f64; m], step: ens.step })
}

/// Average of the posterior means of steps `burn_in + 1 ..= n`, where
/// `means[i]` belongs to step `i + 1`, and its componentwise reciprocal.
pub fn estimate(means: &[Vec<f64>], burn_in: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if burn_in >= means.len() {
        return Err(Error::FilterConfig(format!("burn-in {burn_in} leaves no step out of {}", means.len())));
    }
    let tail = &means[burn_in..];
    let mut avg = vec![0.0; tail[0].len()];
    for m in tail {
        for (a, v) in avg.iter_mut().zip(m) {
            *a += v;
        }
    }
    for a in avg.iter_mut() {
        *a /= tail.len() as f64;
    }
    let widths = avg.iter().map(|v| 1.0 / v).collect();
    Ok((avg, widths))
}

/// One-step forecast used by the filter.
pub trait DirectFilterModel {
    /// Width-independent data of one step.
    type Step: Sync;

    fn n_params(&self) -> usize;

    fn n_observed(&self) -> usize;

    /// Prepares the forecast of step `n` from `Y_{n-1}` (`None` at `n = 1`).
    fn prepare(&self, n: usize, previous: Option<&[f64]>) -> Result<Self::Step>;

    /// Forecast `H h(H^{-1} Y_{n-1}, theta)` of `Y_n`.
    fn forecast(&self, step: &Self::Step, theta: &[f64]) -> Result<Vec<f64>>;

    /// Called once per step with the posterior mean; updates the companion state.
    fn advance(&mut self, step: &Self::Step, theta_mean: &[f64]) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateTrace {
    pub steps: Vec<usize>,
    /// Posterior mean of `theta` per step.
    pub mean: Vec<Vec<f64>>,
    /// `1 / mean`, per step.
    pub width: Vec<Vec<f64>>,
    /// Burn-in average up to each step (the posterior mean itself during burn-in).
    pub running: Vec<Vec<f64>>,
    /// Weighted standard deviation of the posterior ensemble.
    pub spread: Vec<Vec<f64>>,
    pub effective_size: Vec<f64>,
    /// Particles whose forecast failed and got zero weight.
    pub failed: Vec<usize>,
}

impl EstimateTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// First step from which component `k` of the width estimate stays
    /// within `tol` (relative) of `truth` until the end.
    pub fn settling_step(&self, k: usize, truth: f64, tol: f64) -> Option<usize> {
        let inside = |w: &Vec<f64>| ((w[k] - truth) / truth).abs() <= tol;
        let last_out = self.width.iter().rposition(|w| !inside(w));
        match last_out {
            None => self.steps.first().copied(),
            Some(i) if i + 1 < self.len() => Some(self.steps[i + 1]),
            Some(_) => None,
        }
    }

    /// First step at which component `k` of the width estimate is within `tol` of `truth`.
    pub fn entry_step(&self, k: usize, truth: f64, tol: f64) -> Option<usize> {
        self.width.iter().position(|w| ((w[k] - truth) / truth).abs() <= tol).map(|i| self.steps[i])
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub trace: EstimateTrace,
    /// Burn-in averaged `theta` and its reciprocal.
    pub theta: Vec<f64>,
    pub widths: Vec<f64>,
    /// Weighted posterior ensemble of the last step.
    pub posterior: ParticleEnsemble,
}

pub fn run_filter<M, E>(model: &mut M, obs: &ObservationSeries, cfg: &FilterConfig, exec: &E) -> Result<FilterOutput>
where
    M: DirectFilterModel + Sync,
    E: Executor,
{
    let n_steps = obs.len();
    cfg.validate(model.n_params(), n_steps)?;
    if obs.dim() != model.n_observed() {
        return Err(Error::Dimension { expected: model.n_observed(), found: obs.dim() });
    }
    let r = cfg.likelihood_diag(obs.dim())?;
    let mut ens = init_ensemble(cfg)?;
    let mut trace = EstimateTrace::default();
    let mut posterior = ens.clone();
    for (k, (n, y)) in obs.records.iter().enumerate() {
        let previous = if k == 0 { None } else { Some(obs.records[k - 1].1.as_slice()) };
        let step = model.prepare(*n, previous)?;
        let prior = predict(&ens, &cfg.exploration, cfg.floor, cfg.seed);
        let model_ref: &M = model;
        let logs: Vec<Option<f64>> = exec.map(prior.len(), |i| {
            model_ref.forecast(&step, &prior.particles[i]).ok().map(|f| log_likelihood(&f, y, &r))
        });
        let failed = logs.iter().filter(|l| l.is_none()).count();
        let logs: Vec<f64> = logs.into_iter().map(|l| l.unwrap_or(f64::NEG_INFINITY)).collect();
        let weights = normalize_log_weights(&logs, *n)?;
        posterior = ParticleEnsemble { weights, ..prior };
        let mean = posterior.mean();
        model.advance(&step, &mean)?;

        trace.steps.push(*n);
        trace.width.push(mean.iter().map(|v| 1.0 / v).collect());
        trace.spread.push(posterior.spread());
        trace.effective_size.push(posterior.effective_size());
        trace.failed.push(failed);
        trace.mean.push(mean.clone());
        let running = if k >= cfg.burn_in { estimate(&trace.mean, cfg.burn_in)?.0 } else { mean };
        trace.running.push(running);
        ens = resample(&posterior, cfg.seed)?;
    }
    let (theta, widths) = if n_steps == 0 { (Vec::new(), Vec::new()) } else { estimate(&trace.mean, cfg.burn_in)? };
    Ok(FilterOutput { trace, theta, widths, posterior })
}
