//! Experiment configuration: a flat `key = value` text format with dotted
//! section keys, and the built-in presets.
//!
//! Lists are comma separated. Boundary patches are written
//! `wall:from:to:value` and fracture ends `fracture:start|end:value`, where a
//! value is a pressure or `noflow`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use fracture_df_core::assembly::{BoundaryConditions, Condition, FractureStorage, ModelCoefficients, Wall};
use fracture_df_core::filter::{FilterConfig, Prior};
use fracture_df_core::forward::PropagationMode;
use fracture_df_core::geometry::{CaseSpec, Rect, SegmentEnd};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("key `{key}`: cannot parse `{value}`: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("unknown preset `{0}` (expected case1, case2, case3a or case3b)")]
    Preset(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Single,
    Parallel,
    Intersecting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub kind: GeometryKind,
    pub domain: Rect,
    /// Positions of the vertical fractures.
    pub x: Vec<f64>,
    /// Position of the horizontal fracture (intersecting geometry only).
    pub y: Option<f64>,
    /// True widths, horizontal fracture first when there is one.
    pub widths: Vec<f64>,
    pub constrain_intersections: bool,
}

impl GeometryConfig {
    pub fn case_spec(&self) -> Result<CaseSpec> {
        let need = |n: usize, what: &str, got: usize| {
            if n == got {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{what}: expected {n} values, got {got}")))
            }
        };
        match self.kind {
            GeometryKind::Single => {
                need(1, "geometry.x", self.x.len())?;
                need(1, "geometry.widths", self.widths.len())?;
                Ok(CaseSpec::Single { domain: self.domain, x: self.x[0], width: self.widths[0] })
            }
            GeometryKind::Parallel => {
                need(2, "geometry.x", self.x.len())?;
                need(2, "geometry.widths", self.widths.len())?;
                Ok(CaseSpec::Parallel {
                    domain: self.domain,
                    xs: [self.x[0], self.x[1]],
                    widths: [self.widths[0], self.widths[1]],
                })
            }
            GeometryKind::Intersecting => {
                need(1, "geometry.x", self.x.len())?;
                need(2, "geometry.widths", self.widths.len())?;
                let y = self
                    .y
                    .ok_or_else(|| ConfigError::Invalid("geometry.y is required for intersecting fractures".into()))?;
                Ok(CaseSpec::Intersecting {
                    domain: self.domain,
                    x: self.x[0],
                    y,
                    widths: [self.widths[0], self.widths[1]],
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientConfig {
    /// Isotropic conductivity, one value for all subdomains or one per subdomain.
    pub conductivity: Vec<f64>,
    pub storage: Vec<f64>,
    pub fracture_conductivity: f64,
    pub fracture_storage: FractureStorage,
}

impl CoefficientConfig {
    pub fn build(&self, n_subdomains: usize) -> Result<ModelCoefficients> {
        let expand = |v: &[f64], key: &str| -> Result<Vec<f64>> {
            match v.len() {
                1 => Ok(vec![v[0]; n_subdomains]),
                n if n == n_subdomains => Ok(v.to_vec()),
                n => Err(ConfigError::Invalid(format!("{key}: expected 1 or {n_subdomains} values, got {n}"))),
            }
        };
        Ok(ModelCoefficients {
            conductivity: expand(&self.conductivity, "coefficients.conductivity")?
                .into_iter()
                .map(|k| [[k, 0.0], [0.0, k]])
                .collect(),
            storage: expand(&self.storage, "coefficients.storage")?,
            fracture_conductivity: self.fracture_conductivity,
            fracture_storage: self.fracture_storage,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSettings {
    pub particles: usize,
    pub exploration: Vec<f64>,
    /// `None` uses the observation noise variance.
    pub likelihood_variance: Option<Vec<f64>>,
    pub burn_in: usize,
    pub prior: Prior,
    pub floor: f64,
    pub mode: PropagationMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub case: String,
    pub geometry: GeometryConfig,
    pub h: f64,
    pub dt: f64,
    pub t_end: f64,
    pub coefficients: CoefficientConfig,
    pub boundary: BoundaryConditions,
    pub initial_pressure: f64,
    pub noise_variance: Vec<f64>,
    pub filter: FilterSettings,
    pub seed: u64,
    /// Relative recovery tolerance on the final widths; decides the exit code.
    pub tolerance: Option<f64>,
    /// Relative band used to report when a trace first reaches the truth.
    pub band: f64,
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "case1" => Ok(case1()),
            "case2" => Ok(case2()),
            "case3a" => Ok(case3(1.0, "case3a", vec![8000.0, 10000.0])),
            "case3b" => Ok(case3(5.0, "case3b", vec![18000.0, 18000.0])),
            other => Err(ConfigError::Preset(other.to_string())),
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn true_widths(&self) -> &[f64] {
        &self.geometry.widths
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            particles: self.filter.particles,
            exploration: self.filter.exploration.clone(),
            likelihood_variance: self.filter.likelihood_variance.clone().unwrap_or_else(|| self.noise_variance.clone()),
            burn_in: self.filter.burn_in,
            prior: self.filter.prior.clone(),
            floor: self.filter.floor,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.geometry.case_spec()?;
        for (name, v) in [("mesh.h", self.h), ("time.dt", self.dt), ("time.end", self.t_end)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let n = self.t_end / self.dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) || n.round() < 1.0 {
            return bad(format!("time.end / time.dt = {n} is not a positive integer"));
        }
        if self.geometry.widths.iter().any(|&w| !(w > 0.0 && w <= 1.0 / self.filter.floor)) {
            return bad(format!(
                "widths {:?} must lie in (0, {}] to be reachable above the positivity floor",
                self.geometry.widths,
                1.0 / self.filter.floor
            ));
        }
        for patch in &self.boundary.patches {
            if !(patch.from <= patch.to) {
                return bad(format!("boundary patch {patch:?} has from > to"));
            }
            let (lo, hi) = match patch.wall {
                Wall::Left | Wall::Right => (self.geometry.domain.y_min, self.geometry.domain.y_max),
                Wall::Bottom | Wall::Top => (self.geometry.domain.x_min, self.geometry.domain.x_max),
            };
            let tol = 1e-12 * self.geometry.domain.diameter();
            if patch.from < lo - tol || patch.to > hi + tol {
                return bad(format!("boundary patch {patch:?} leaves its wall [{lo}, {hi}]"));
            }
        }
        let n_fractures = self.geometry.widths.len();
        if let Some(e) = self.boundary.fracture_ends.iter().find(|e| e.fracture >= n_fractures) {
            return bad(format!("fracture end {e:?} refers to a missing fracture"));
        }
        if self.noise_variance.is_empty() || self.noise_variance.iter().any(|&v| !(v >= 0.0)) {
            return bad("observation.noise_variance must be non-negative".into());
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return bad("run.tolerance must be positive".into());
            }
        }
        if !(self.band > 0.0) {
            return bad("run.band must be positive".into());
        }
        self.filter_config().validate(n_fractures, self.n_steps()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Every effective setting in the file format, so that `parse(echo())` is the same config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("case", self.case.clone());
        let g = &self.geometry;
        kv(
            "geometry.kind",
            match g.kind {
                GeometryKind::Single => "single",
                GeometryKind::Parallel => "parallel",
                GeometryKind::Intersecting => "intersecting",
            }
            .into(),
        );
        let d = g.domain;
        kv("geometry.domain", list(&[d.x_min, d.x_max, d.y_min, d.y_max]));
        kv("geometry.x", list(&g.x));
        kv("geometry.y", g.y.map_or("none".into(), |y| y.to_string()));
        kv("geometry.widths", list(&g.widths));
        kv("geometry.constrain_intersections", g.constrain_intersections.to_string());
        kv("mesh.h", self.h.to_string());
        kv("time.dt", self.dt.to_string());
        kv("time.end", self.t_end.to_string());
        let c = &self.coefficients;
        kv("coefficients.conductivity", list(&c.conductivity));
        kv("coefficients.storage", list(&c.storage));
        kv("coefficients.fracture_conductivity", c.fracture_conductivity.to_string());
        let (kind, value) = match c.fracture_storage {
            FractureStorage::Scaled { porosity } => ("scaled", porosity),
            FractureStorage::Fixed(v) => ("fixed", v),
        };
        kv("coefficients.fracture_storage", kind.into());
        kv("coefficients.fracture_storage_value", value.to_string());
        let b = &self.boundary;
        kv("boundary.wall_default", condition(b.default_wall));
        kv(
            "boundary.patches",
            if b.patches.is_empty() {
                "none".into()
            } else {
                b.patches
                    .iter()
                    .map(|p| format!("{}:{}:{}:{}", wall_name(p.wall), p.from, p.to, condition(p.condition)))
                    .collect::<Vec<_>>()
                    .join(",")
            },
        );
        kv("boundary.fracture_end_default", condition(b.default_fracture_end));
        kv(
            "boundary.fracture_ends",
            if b.fracture_ends.is_empty() {
                "none".into()
            } else {
                b.fracture_ends
                    .iter()
                    .map(|e| {
                        let end = if e.end == SegmentEnd::Start { "start" } else { "end" };
                        format!("{}:{end}:{}", e.fracture, condition(e.condition))
                    })
                    .collect::<Vec<_>>()
                    .join(",")
            },
        );
        kv("initial.pressure", self.initial_pressure.to_string());
        kv("observation.noise_variance", list(&self.noise_variance));
        let f = &self.filter;
        kv("filter.particles", f.particles.to_string());
        kv("filter.exploration", list(&f.exploration));
        kv("filter.likelihood_variance", f.likelihood_variance.as_ref().map_or("noise".into(), |v| list(v)));
        kv("filter.burn_in", f.burn_in.to_string());
        match &f.prior {
            Prior::Uniform { low, high } => {
                kv("filter.prior", "uniform".into());
                kv("filter.prior.low", list(low));
                kv("filter.prior.high", list(high));
            }
            Prior::Point(v) => {
                kv("filter.prior", "point".into());
                kv("filter.prior.value", list(v));
            }
            Prior::Normal { mean, std, .. } => {
                kv("filter.prior", "normal".into());
                kv("filter.prior.mean", list(mean));
                kv("filter.prior.std", list(std));
            }
        }
        kv("filter.floor", f.floor.to_string());
        kv(
            "filter.mode",
            match f.mode {
                PropagationMode::Companion => "companion",
                PropagationMode::ClosedFracture => "closed",
            }
            .into(),
        );
        kv("run.seed", self.seed.to_string());
        kv("run.tolerance", self.tolerance.map_or("none".into(), |t| t.to_string()));
        kv("run.band", self.band.to_string());
        s
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn condition(c: Condition) -> String {
    match c {
        Condition::Pressure(p) => p.to_string(),
        Condition::NoFlow => "noflow".into(),
    }
}

fn wall_name(w: Wall) -> &'static str {
    match w {
        Wall::Left => "left",
        Wall::Right => "right",
        Wall::Bottom => "bottom",
        Wall::Top => "top",
    }
}

const KEYS: &[&str] = &[
    "case",
    "geometry.kind",
    "geometry.domain",
    "geometry.x",
    "geometry.y",
    "geometry.widths",
    "geometry.constrain_intersections",
    "mesh.h",
    "time.dt",
    "time.end",
    "coefficients.conductivity",
    "coefficients.storage",
    "coefficients.fracture_conductivity",
    "coefficients.fracture_storage",
    "coefficients.fracture_storage_value",
    "boundary.wall_default",
    "boundary.patches",
    "boundary.fracture_end_default",
    "boundary.fracture_ends",
    "initial.pressure",
    "observation.noise_variance",
    "filter.particles",
    "filter.exploration",
    "filter.likelihood_variance",
    "filter.burn_in",
    "filter.prior",
    "filter.prior.low",
    "filter.prior.high",
    "filter.prior.value",
    "filter.prior.mean",
    "filter.prior.std",
    "filter.floor",
    "filter.mode",
    "run.seed",
    "run.tolerance",
    "run.band",
];

/// Parses configuration text. Settings start from the preset named by `case`
/// (default `case1`); every other key overrides it.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::UnknownKey { line, key: k });
        }
        if !seen.insert(k.clone()) {
            return Err(ConfigError::Duplicate { line, key: k });
        }
        entries.push((line, k, v));
    }
    let base = entries.iter().find(|(_, k, _)| k == "case").map_or("case1", |(_, _, v)| v.as_str());
    let mut cfg = match ExperimentConfig::preset(base) {
        Ok(c) => c,
        Err(_) => {
            let mut c = case1();
            c.case = base.to_string();
            c
        }
    };
    // The prior kind decides how its parameters are read, so apply it first.
    let mut prior_kind = match cfg.filter.prior {
        Prior::Uniform { .. } => "uniform",
        Prior::Point(_) => "point",
        Prior::Normal { .. } => "normal",
    }
    .to_string();
    let mut prior_params: Vec<(String, Vec<f64>)> = Vec::new();
    for (_, k, v) in &entries {
        apply(&mut cfg, k, v, &mut prior_kind, &mut prior_params)?;
    }
    if !prior_params.is_empty() || prior_kind != prior_name(&cfg.filter.prior) {
        cfg.filter.prior = build_prior(&cfg.filter.prior, &prior_kind, &prior_params)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prior_name(p: &Prior) -> &'static str {
    match p {
        Prior::Uniform { .. } => "uniform",
        Prior::Point(_) => "point",
        Prior::Normal { .. } => "normal",
    }
}

fn build_prior(current: &Prior, kind: &str, params: &[(String, Vec<f64>)]) -> Result<Prior> {
    let get = |name: &str| params.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone());
    let missing = |name: &str| ConfigError::Invalid(format!("filter.prior = {kind} needs filter.prior.{name}"));
    let same_kind = prior_name(current) == kind;
    for (k, _) in params {
        let allowed: &[&str] = match kind {
            "uniform" => &["low", "high"],
            "point" => &["value"],
            _ => &["mean", "std"],
        };
        if !allowed.contains(&k.as_str()) {
            return Err(ConfigError::Invalid(format!("filter.prior.{k} does not apply to a {kind} prior")));
        }
    }
    match (kind, current) {
        ("uniform", cur) => {
            let (l0, h0) = match (same_kind, cur) {
                (true, Prior::Uniform { low, high }) => (Some(low.clone()), Some(high.clone())),
                _ => (None, None),
            };
            Ok(Prior::Uniform {
                low: get("low").or(l0).ok_or_else(|| missing("low"))?,
                high: get("high").or(h0).ok_or_else(|| missing("high"))?,
            })
        }
        ("point", cur) => {
            let v0 = match (same_kind, cur) {
                (true, Prior::Point(v)) => Some(v.clone()),
                _ => None,
            };
            Ok(Prior::Point(get("value").or(v0).ok_or_else(|| missing("value"))?))
        }
        (_, cur) => {
            let (m0, s0) = match (same_kind, cur) {
                (true, Prior::Normal { mean, std, .. }) => (Some(mean.clone()), Some(std.clone())),
                _ => (None, None),
            };
            Ok(Prior::Normal {
                mean: get("mean").or(m0).ok_or_else(|| missing("mean"))?,
                std: get("std").or(s0).ok_or_else(|| missing("std"))?,
                truncate: true,
            })
        }
    }
}

fn value_error(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), reason: reason.to_string() }
}

fn float(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|e| value_error(key, v, e))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(value_error(key, v, "not finite"))
    }
}

fn floats(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|p| float(key, p.trim())).collect()
}

fn parse_condition(key: &str, v: &str) -> Result<Condition> {
    if v.eq_ignore_ascii_case("noflow") {
        Ok(Condition::NoFlow)
    } else {
        Ok(Condition::Pressure(float(key, v)?))
    }
}

fn apply(
    cfg: &mut ExperimentConfig,
    key: &str,
    v: &str,
    prior_kind: &mut String,
    prior_params: &mut Vec<(String, Vec<f64>)>,
) -> Result<()> {
    let int = |v: &str| -> Result<usize> { v.parse().map_err(|e| value_error(key, v, e)) };
    match key {
        "case" => cfg.case = v.to_string(),
        "geometry.kind" => {
            cfg.geometry.kind = match v {
                "single" => GeometryKind::Single,
                "parallel" => GeometryKind::Parallel,
                "intersecting" => GeometryKind::Intersecting,
                _ => return Err(value_error(key, v, "expected single, parallel or intersecting")),
            }
        }
        "geometry.domain" => {
            let d = floats(key, v)?;
            if d.len() != 4 {
                return Err(value_error(key, v, "expected x_min,x_max,y_min,y_max"));
            }
            cfg.geometry.domain = Rect::new(d[0], d[1], d[2], d[3]);
        }
        "geometry.x" => cfg.geometry.x = floats(key, v)?,
        "geometry.y" => cfg.geometry.y = if v == "none" { None } else { Some(float(key, v)?) },
        "geometry.widths" => cfg.geometry.widths = floats(key, v)?,
        "geometry.constrain_intersections" => {
            cfg.geometry.constrain_intersections = v.parse().map_err(|e| value_error(key, v, e))?
        }
        "mesh.h" => cfg.h = float(key, v)?,
        "time.dt" => cfg.dt = float(key, v)?,
        "time.end" => cfg.t_end = float(key, v)?,
        "coefficients.conductivity" => cfg.coefficients.conductivity = floats(key, v)?,
        "coefficients.storage" => cfg.coefficients.storage = floats(key, v)?,
        "coefficients.fracture_conductivity" => cfg.coefficients.fracture_conductivity = float(key, v)?,
        "coefficients.fracture_storage" => {
            let value = match cfg.coefficients.fracture_storage {
                FractureStorage::Scaled { porosity } => porosity,
                FractureStorage::Fixed(x) => x,
            };
            cfg.coefficients.fracture_storage = match v {
                "scaled" => FractureStorage::Scaled { porosity: value },
                "fixed" => FractureStorage::Fixed(value),
                _ => return Err(value_error(key, v, "expected scaled or fixed")),
            }
        }
        "coefficients.fracture_storage_value" => {
            let x = float(key, v)?;
            match &mut cfg.coefficients.fracture_storage {
                FractureStorage::Scaled { porosity } => *porosity = x,
                FractureStorage::Fixed(value) => *value = x,
            }
        }
        "boundary.wall_default" => cfg.boundary.default_wall = parse_condition(key, v)?,
        "boundary.patches" => {
            cfg.boundary.patches.clear();
            if v != "none" {
                for item in v.split(',') {
                    let parts: Vec<&str> = item.trim().split(':').collect();
                    if parts.len() != 4 {
                        return Err(value_error(key, item, "expected wall:from:to:value"));
                    }
                    let wall = match parts[0] {
                        "left" => Wall::Left,
                        "right" => Wall::Right,
                        "bottom" => Wall::Bottom,
                        "top" => Wall::Top,
                        _ => return Err(value_error(key, item, "unknown wall")),
                    };
                    let b = std::mem::take(&mut cfg.boundary);
                    cfg.boundary = b.with_patch(
                        wall,
                        float(key, parts[1])?,
                        float(key, parts[2])?,
                        parse_condition(key, parts[3])?,
                    );
                }
            }
        }
        "boundary.fracture_end_default" => cfg.boundary.default_fracture_end = parse_condition(key, v)?,
        "boundary.fracture_ends" => {
            cfg.boundary.fracture_ends.clear();
            if v != "none" {
                for item in v.split(',') {
                    let parts: Vec<&str> = item.trim().split(':').collect();
                    if parts.len() != 3 {
                        return Err(value_error(key, item, "expected fracture:start|end:value"));
                    }
                    let end = match parts[1] {
                        "start" => SegmentEnd::Start,
                        "end" => SegmentEnd::End,
                        _ => return Err(value_error(key, item, "expected start or end")),
                    };
                    let b = std::mem::take(&mut cfg.boundary);
                    cfg.boundary = b.with_fracture_end(
                        parts[0].parse().map_err(|e| value_error(key, item, e))?,
                        end,
                        parse_condition(key, parts[2])?,
                    );
                }
            }
        }
        "initial.pressure" => cfg.initial_pressure = float(key, v)?,
        "observation.noise_variance" => cfg.noise_variance = floats(key, v)?,
        "filter.particles" => cfg.filter.particles = int(v)?,
        "filter.exploration" => cfg.filter.exploration = floats(key, v)?,
        "filter.likelihood_variance" => {
            cfg.filter.likelihood_variance = if v == "noise" { None } else { Some(floats(key, v)?) }
        }
        "filter.burn_in" => cfg.filter.burn_in = int(v)?,
        "filter.prior" => {
            if !["uniform", "point", "normal"].contains(&v) {
                return Err(value_error(key, v, "expected uniform, point or normal"));
            }
            *prior_kind = v.to_string();
        }
        "filter.prior.low" | "filter.prior.high" | "filter.prior.value" | "filter.prior.mean" | "filter.prior.std" => {
            let name = key.trim_start_matches("filter.prior.").to_string();
            prior_params.push((name, floats(key, v)?));
        }
        "filter.floor" => cfg.filter.floor = float(key, v)?,
        "filter.mode" => {
            cfg.filter.mode = match v {
                "companion" => PropagationMode::Companion,
                "closed" => PropagationMode::ClosedFracture,
                _ => return Err(value_error(key, v, "expected companion or closed")),
            }
        }
        "run.seed" => cfg.seed = v.parse().map_err(|e| value_error(key, v, e))?,
        "run.tolerance" => cfg.tolerance = if v == "none" { None } else { Some(float(key, v)?) },
        "run.band" => cfg.band = float(key, v)?,
        _ => unreachable!("key list and match arms disagree on `{key}`"),
    }
    Ok(())
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse(&text)
}

/// Uniform prior on `[0.5 g, 2 g]` around the guess `g`.
fn bracket(guess: &[f64]) -> Prior {
    Prior::Uniform { low: guess.iter().map(|g| 0.5 * g).collect(), high: guess.iter().map(|g| 2.0 * g).collect() }
}

/// The guess is a fifth of the true `1/d`, so the filter starts away from the truth.
fn guess_from(widths: &[f64]) -> Vec<f64> {
    widths.iter().map(|d| 1.0 / d / 5.0).collect()
}

fn base_coefficients() -> CoefficientConfig {
    CoefficientConfig {
        conductivity: vec![1.0],
        storage: vec![1.0],
        fracture_conductivity: 1e6,
        fracture_storage: FractureStorage::Scaled { porosity: 1.0 },
    }
}

fn vertical_case_boundary(n_fractures: usize, height: f64) -> BoundaryConditions {
    let mut bc = BoundaryConditions::sealed()
        .with_patch(Wall::Left, 0.0, 0.2 * height, Condition::Pressure(0.0))
        .with_patch(Wall::Right, 0.0, 0.2 * height, Condition::Pressure(1.0));
    for f in 0..n_fractures {
        bc = bc.with_fracture_end(f, SegmentEnd::Start, Condition::Pressure(1.0)).with_fracture_end(
            f,
            SegmentEnd::End,
            Condition::Pressure(0.0),
        );
    }
    bc
}

fn case1() -> ExperimentConfig {
    let widths = vec![1e-3];
    ExperimentConfig {
        case: "case1".into(),
        geometry: GeometryConfig {
            kind: GeometryKind::Single,
            domain: Rect::new(0.0, 2.0, 0.0, 1.0),
            x: vec![1.0],
            y: None,
            widths: widths.clone(),
            constrain_intersections: false,
        },
        h: 1.0 / 50.0,
        dt: 0.1,
        t_end: 5.0,
        coefficients: base_coefficients(),
        boundary: vertical_case_boundary(1, 1.0),
        initial_pressure: 0.0,
        noise_variance: vec![500.0],
        filter: FilterSettings {
            particles: 80,
            exploration: vec![400.0],
            likelihood_variance: None,
            burn_in: 10,
            prior: bracket(&guess_from(&widths)),
            floor: 1.0,
            mode: PropagationMode::Companion,
        },
        seed: 1,
        tolerance: Some(0.1),
        band: 0.1,
    }
}

fn case2() -> ExperimentConfig {
    let widths = vec![2.5e-3, 5e-3];
    let mut c = case1();
    c.case = "case2".into();
    c.geometry = GeometryConfig {
        kind: GeometryKind::Parallel,
        domain: Rect::new(0.0, 3.0, 0.0, 1.0),
        x: vec![1.0, 2.0],
        y: None,
        widths: widths.clone(),
        constrain_intersections: false,
    };
    c.boundary = vertical_case_boundary(2, 1.0);
    c.filter.exploration = vec![2000.0, 7000.0];
    c.filter.prior = bracket(&guess_from(&widths));
    c.tolerance = Some(0.15);
    c.band = 0.15;
    c
}

fn case3(a: f64, name: &str, exploration: Vec<f64>) -> ExperimentConfig {
    let widths = vec![1e-3, 6e-4];
    let mut c = case1();
    c.case = name.into();
    c.geometry = GeometryConfig {
        kind: GeometryKind::Intersecting,
        domain: Rect::new(0.0, 1.0, 0.0, 1.0),
        x: vec![0.5],
        y: Some(0.5),
        widths: widths.clone(),
        constrain_intersections: true,
    };
    // Horizontal fracture: `a` on the left, `b = 0` on the right. Vertical: 1 at the bottom, 0 at the top.
    c.boundary = BoundaryConditions::sealed()
        .with_fracture_end(0, SegmentEnd::Start, Condition::Pressure(a))
        .with_fracture_end(0, SegmentEnd::End, Condition::Pressure(0.0))
        .with_fracture_end(1, SegmentEnd::Start, Condition::Pressure(1.0))
        .with_fracture_end(1, SegmentEnd::End, Condition::Pressure(0.0));
    c.filter.particles = 120;
    c.filter.exploration = exploration;
    c.filter.prior = bracket(&guess_from(&widths));
    c.tolerance = Some(0.2);
    c.band = 0.2;
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_the_published_numbers() {
        let c = ExperimentConfig::preset("case1").unwrap();
        assert_eq!(c.geometry.domain, Rect::new(0.0, 2.0, 0.0, 1.0));
        assert_eq!(c.geometry.widths, vec![1e-3]);
        assert_eq!((c.dt, c.h, c.t_end, c.filter.particles), (0.1, 1.0 / 50.0, 5.0, 80));
        assert_eq!(c.n_steps(), 50);
        let c = ExperimentConfig::preset("case2").unwrap();
        assert_eq!(c.geometry.widths, vec![2.5e-3, 5e-3]);
        assert_eq!(c.filter.particles, 80);
        let c = ExperimentConfig::preset("case3a").unwrap();
        assert_eq!(c.geometry.widths, vec![1e-3, 6e-4]);
        assert_eq!(c.filter.particles, 120);
        assert_eq!(c.boundary.fracture_end_condition(0, SegmentEnd::Start).unwrap(), Condition::Pressure(1.0));
        assert_eq!(c.boundary.fracture_end_condition(0, SegmentEnd::End).unwrap(), Condition::Pressure(0.0));
        let c = ExperimentConfig::preset("case3b").unwrap();
        assert_eq!(c.boundary.fracture_end_condition(0, SegmentEnd::Start).unwrap(), Condition::Pressure(5.0));
        assert_eq!(c.filter.exploration, vec![18000.0, 18000.0]);
        assert!(ExperimentConfig::preset("case4").is_err());
    }

    #[test]
    fn echo_round_trips_for_every_preset() {
        for name in ["case1", "case2", "case3a", "case3b"] {
            let c = ExperimentConfig::preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(parse(&c.echo()).unwrap(), c, "{name}");
        }
    }

    #[test]
    fn overrides_apply_on_top_of_the_preset() {
        let c = parse("case = case2\n# comment\nfilter.exploration = 4000, 8000\nrun.seed = 9 # trailing\n").unwrap();
        assert_eq!(c.filter.exploration, vec![4000.0, 8000.0]);
        assert_eq!(c.seed, 9);
        assert_eq!(c.geometry.widths, vec![2.5e-3, 5e-3]);
        let c = parse("filter.prior = point\nfilter.prior.value = 1000").unwrap();
        assert_eq!(c.filter.prior, Prior::Point(vec![1000.0]));
        let c = parse("boundary.patches = none\nboundary.wall_default = 0.5").unwrap();
        assert!(c.boundary.patches.is_empty());
        assert_eq!(c.boundary.default_wall, Condition::Pressure(0.5));
        let back = parse(&c.echo()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(matches!(parse("nonsense"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(parse("\nfoo.bar = 1"), Err(ConfigError::UnknownKey { line: 2, .. })));
        assert!(matches!(parse("mesh.h = 0.1\nmesh.h = 0.2"), Err(ConfigError::Duplicate { line: 2, .. })));
        assert!(matches!(parse("mesh.h = abc"), Err(ConfigError::Value { .. })));
        assert!(matches!(parse("time.end = 5.05"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse("filter.burn_in = 50"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse("geometry.widths = 1e-3, 2e-3"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse("boundary.patches = left:0:3:1"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse("filter.prior.value = 3"), Err(ConfigError::Invalid(_))));
    }
}
