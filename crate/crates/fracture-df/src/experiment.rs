//! Twin experiments: simulate the truth, draw synthetic data, run the filter.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context, Result};
use fracture_df_core::assembly::SystemMatrices;
use fracture_df_core::exec::{Executor, Sequential};
use fracture_df_core::filter::{run_filter, EstimateTrace, FractureFilterModel};
use fracture_df_core::forward::{
    constrain_all_intersections, initial_state, simulate, BlockSystem, DiscreteState, ReducedPropagator,
};
use fracture_df_core::geometry::{build_geometry, generate_mesh, TriangularMesh};
use fracture_df_core::observation::{make_synthetic, ObservationSeries};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::exec::RayonExecutor;
use crate::output;

/// Everything a twin run needs that does not depend on the seed or the filter settings.
pub struct PreparedModel {
    pub mesh: TriangularMesh,
    pub mats: Arc<SystemMatrices>,
    pub truth_system: BlockSystem,
    pub x0: DiscreteState,
    pub truth: Vec<DiscreteState>,
    pub propagator: Arc<ReducedPropagator>,
    pub setup_time: Duration,
}

/// Discretizes the configured problem and builds the true system.
pub fn build_system(
    cfg: &ExperimentConfig,
) -> Result<(TriangularMesh, Arc<SystemMatrices>, BlockSystem, DiscreteState)> {
    let spec = cfg.geometry.case_spec().context("geometry")?;
    let geometry = build_geometry(&spec).context("geometry")?;
    let mesh = generate_mesh(&geometry, cfg.h).context("mesh")?;
    let coeffs = cfg.coefficients.build(mesh.n_subdomains()).context("coefficients")?;
    let mut mats = SystemMatrices::assemble(&mesh, &coeffs, &cfg.boundary).context("assembly")?;
    if cfg.geometry.constrain_intersections {
        mats = constrain_all_intersections(&mats, &mesh).context("intersection constraints")?;
    }
    let mats = Arc::new(mats);
    let system = BlockSystem::new(mats.clone(), cfg.dt, cfg.true_widths()).context("forward: factorization")?;
    let p0 = cfg.initial_pressure;
    let x0 = initial_state(&mesh, &mats.layout, |_, _| p0, |_, _| p0);
    Ok((mesh, mats, system, x0))
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedModel> {
    let start = Instant::now();
    cfg.validate().context("config")?;
    let (mesh, mats, truth_system, x0) = build_system(cfg)?;
    let truth = simulate(&truth_system, &x0, cfg.n_steps(), |_| truth_system.zero_load()).context("forward: truth")?;
    let propagator =
        Arc::new(ReducedPropagator::new(mats.clone(), cfg.dt, cfg.filter.mode).context("forward: reduced propagator")?);
    Ok(PreparedModel { mesh, mats, truth_system, x0, truth, propagator, setup_time: start.elapsed() })
}

#[derive(Debug, Clone, Serialize)]
pub struct TwinReport {
    pub case: String,
    pub seed: u64,
    pub particles: usize,
    pub exploration: Vec<f64>,
    pub steps: usize,
    pub burn_in: usize,
    pub true_widths: Vec<f64>,
    /// Reciprocal of the burn-in averaged posterior mean.
    pub estimated_widths: Vec<f64>,
    /// Reciprocal of the last posterior mean.
    pub last_step_widths: Vec<f64>,
    pub relative_errors: Vec<f64>,
    pub band: f64,
    /// First step whose per-step width estimate is inside the band, per fracture.
    pub entry_steps: Vec<Option<usize>>,
    /// First step from which the per-step estimate stays inside the band.
    pub settling_steps: Vec<Option<usize>>,
    pub tolerance: Option<f64>,
    /// Whether every relative error is within the tolerance, if one is set.
    pub passed: Option<bool>,
    pub failed_forecasts: usize,
    pub min_effective_size: f64,
    pub filter_seconds: f64,
    #[serde(skip)]
    pub trace: EstimateTrace,
    #[serde(skip)]
    pub observations: ObservationSeries,
}

/// Runs the filter on a prepared model with the seed and filter settings of `cfg`.
pub fn run_prepared<E: Executor>(model: &PreparedModel, cfg: &ExperimentConfig, exec: &E) -> Result<TwinReport> {
    cfg.validate().context("config")?;
    let obs = make_synthetic(&model.mats.layout, &model.truth, &cfg.noise_variance, cfg.seed).context("observation")?;
    let fcfg = cfg.filter_config();
    let mut fm = FractureFilterModel::new(model.propagator.clone(), model.x0.clone()).context("filter")?;
    let start = Instant::now();
    let out = run_filter(&mut fm, &obs, &fcfg, exec).context("filter")?;
    let filter_seconds = start.elapsed().as_secs_f64();
    let truth = cfg.true_widths().to_vec();
    let relative_errors: Vec<f64> = out.widths.iter().zip(&truth).map(|(e, t)| ((e - t) / t).abs()).collect();
    let passed = cfg.tolerance.map(|tol| relative_errors.iter().all(|&e| e <= tol));
    let trace = out.trace;
    let entry_steps = (0..truth.len()).map(|k| trace.entry_step(k, truth[k], cfg.band)).collect();
    let settling_steps = (0..truth.len()).map(|k| trace.settling_step(k, truth[k], cfg.band)).collect();
    Ok(TwinReport {
        case: cfg.case.clone(),
        seed: cfg.seed,
        particles: cfg.filter.particles,
        exploration: cfg.filter.exploration.clone(),
        steps: trace.len(),
        burn_in: cfg.filter.burn_in,
        last_step_widths: trace.width.last().cloned().unwrap_or_default(),
        true_widths: truth,
        estimated_widths: out.widths,
        relative_errors,
        band: cfg.band,
        entry_steps,
        settling_steps,
        tolerance: cfg.tolerance,
        passed,
        failed_forecasts: trace.failed.iter().sum(),
        min_effective_size: trace.effective_size.iter().cloned().fold(f64::INFINITY, f64::min),
        filter_seconds,
        trace,
        observations: obs,
    })
}

pub fn run_twin<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Result<TwinReport> {
    let model = prepare(cfg)?;
    run_prepared(&model, cfg, exec)
}

/// Writes the trace, summary, config echo and log of one run into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, report: &TwinReport, log: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("output: create {}", dir.display()))?;
    output::write_trace_csv(&dir.join("trace.csv"), &report.trace).context("output: trace")?;
    output::write_observations_csv(&dir.join("observations.csv"), &report.observations)
        .context("output: observations")?;
    output::write_summary_json(&dir.join("summary.json"), cfg, report).context("output: summary")?;
    std::fs::write(dir.join("config.txt"), cfg.echo()).context("output: config echo")?;
    output::write_log(&dir.join("log.txt"), log).context("output: log")?;
    Ok(())
}

/// One log line per run with the headline numbers.
pub fn describe(report: &TwinReport) -> String {
    let widths: Vec<String> = report
        .estimated_widths
        .iter()
        .zip(&report.true_widths)
        .zip(&report.relative_errors)
        .map(|((e, t), r)| format!("{e:.4e} (true {t:.4e}, error {:.2}%)", 100.0 * r))
        .collect();
    let status = match report.passed {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "n/a",
    };
    format!(
        "{} seed={} M={} eps={:?}: widths {} entry={:?} [{}] {:.2}s",
        report.case,
        report.seed,
        report.particles,
        report.exploration,
        widths.join(", "),
        report.entry_steps,
        status,
        report.filter_seconds
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Exploration,
    Particles,
    Seed,
}

impl std::str::FromStr for SweepAxis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exploration" | "eps" => Ok(Self::Exploration),
            "particles" | "m" => Ok(Self::Particles),
            "seed" => Ok(Self::Seed),
            _ => Err(anyhow!("unknown sweep axis `{s}` (expected exploration, particles or seed)")),
        }
    }
}

/// Sweep values are separated by `;`. An exploration value may list one
/// variance per fracture (`4000,8000`); seeds also accept a range `a..b`.
pub fn sweep_configs(base: &ExperimentConfig, axis: SweepAxis, values: &str) -> Result<Vec<ExperimentConfig>> {
    let mut out = Vec::new();
    for item in values.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        match axis {
            SweepAxis::Exploration => {
                let eps = item
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().with_context(|| format!("sweep value `{item}`")))
                    .collect::<Result<Vec<_>>>()?;
                let mut c = base.clone();
                c.filter.exploration = eps;
                out.push(c);
            }
            SweepAxis::Particles => {
                let mut c = base.clone();
                c.filter.particles = item.parse().with_context(|| format!("sweep value `{item}`"))?;
                out.push(c);
            }
            SweepAxis::Seed => {
                let seeds: Vec<u64> = match item.split_once("..") {
                    Some((a, b)) => {
                        let a: u64 = a.trim().parse().with_context(|| format!("sweep value `{item}`"))?;
                        let b: u64 = b.trim().parse().with_context(|| format!("sweep value `{item}`"))?;
                        (a..b).collect()
                    }
                    None => vec![item.parse().with_context(|| format!("sweep value `{item}`"))?],
                };
                for s in seeds {
                    let mut c = base.clone();
                    c.seed = s;
                    out.push(c);
                }
            }
        }
    }
    if out.is_empty() {
        return Err(anyhow!("sweep needs at least one value"));
    }
    for c in &out {
        c.validate().context("config")?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub config: ExperimentConfig,
    pub result: std::result::Result<TwinReport, String>,
}

/// Runs every configuration against one prepared model, concurrently. A
/// failed run is recorded and the batch continues.
pub fn sweep(
    model: &PreparedModel,
    configs: &[ExperimentConfig],
    exec: &RayonExecutor,
    out_dir: Option<&Path>,
) -> Vec<SweepRow> {
    exec.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(index, cfg)| {
                let result = run_prepared(model, cfg, &Sequential).map_err(|e| format!("{e:#}"));
                if let (Some(dir), Ok(report)) = (out_dir, &result) {
                    let log = vec![describe(report)];
                    if let Err(e) = write_run(&run_dir(dir, index), cfg, report, &log) {
                        return SweepRow { index, config: cfg.clone(), result: Err(format!("{e:#}")) };
                    }
                }
                SweepRow { index, config: cfg.clone(), result }
            })
            .collect()
    })
}

pub fn run_dir(base: &Path, index: usize) -> PathBuf {
    base.join(format!("run_{index:03}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct ForwardRow {
    pub step: usize,
    pub time: f64,
    pub mass_balance_residual: f64,
    /// Largest net flux out of an intersection.
    pub intersection_flux: f64,
    /// Largest spread of the end pressures seen by the segments meeting at an intersection.
    pub intersection_pressure_spread: f64,
    pub mean_fracture_pressure: f64,
    pub max_fracture_flux: f64,
}

/// Simulates the true widths and checks the discrete balances at every step.
pub fn forward_only(cfg: &ExperimentConfig) -> Result<(PreparedForward, Vec<ForwardRow>)> {
    cfg.validate().context("config")?;
    let (mesh, mats, system, x0) = build_system(cfg)?;
    let traj = simulate(&system, &x0, cfg.n_steps(), |_| system.zero_load()).context("forward: simulate")?;
    let layout = mats.layout;
    let load = system.zero_load();
    let mut rows = Vec::with_capacity(cfg.n_steps());
    for w in traj.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        let flux = system.intersection_flux_sums(next).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let spread = system
            .intersection_end_pressures(next)
            .context("forward: intersection pressures")?
            .iter()
            .map(|ends| {
                let lo = ends.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = ends.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if ends.is_empty() {
                    0.0
                } else {
                    hi - lo
                }
            })
            .fold(0.0f64, f64::max);
        let pf: Vec<f64> = (0..layout.n_fracture_pressure).map(|e| next.values[layout.fracture_pressure(e)]).collect();
        let uf = (0..layout.n_fracture_flux).map(|i| next.values[layout.fracture_flux(i)].abs()).fold(0.0, f64::max);
        rows.push(ForwardRow {
            step: next.step,
            time: next.step as f64 * cfg.dt,
            mass_balance_residual: system.mass_balance_residual(prev, next, &load),
            intersection_flux: flux,
            intersection_pressure_spread: spread,
            mean_fracture_pressure: pf.iter().sum::<f64>() / pf.len().max(1) as f64,
            max_fracture_flux: uf,
        });
    }
    Ok((PreparedForward { mesh, system, trajectory: traj }, rows))
}

pub struct PreparedForward {
    pub mesh: TriangularMesh,
    pub system: BlockSystem,
    pub trajectory: Vec<DiscreteState>,
}
