//! One-step map restricted to the fracture unknowns.
//!
//! Split the unknowns into the fracture set `f` (fracture fluxes, fracture
//! pressures, multipliers) and the rest `r`. The widths only enter `K_ff`,
//! so `K_rr` is factored once and its influence on the fracture unknowns,
//! `S0 = K_fr K_rr^{-1} K_rf`, is precomputed. Each width sample then only
//! needs the small system `(K_ff(d) - S0) x_f = F_f(d) - K_fr K_rr^{-1} F_r`.
//! Since `K_rf` only touches fracture-pressure columns, `S0` is a dense block
//! on the fracture pressures.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{solver_matrix, DiscreteState};
use crate::assembly::{FractureStorage, SystemMatrices};
use crate::error::{Error, Result};
use crate::linsolve::{CscMatrix, LdlFactor, SymbolicLdl, Triplets};

const DROP: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PropagationMode {
    /// Full coupling with the subdomains, which are advanced from the
    /// companion state.
    #[default]
    Companion,
    /// Fracture equations alone, with no exchange with the subdomains.
    ClosedFracture,
}

/// Width-independent data of one time step.
#[derive(Debug, Clone)]
pub struct PreparedStep {
    step: usize,
    /// Fracture right-hand side without the width-dependent storage term.
    rhs_base: Vec<f64>,
    /// Previous fracture pressures.
    p_prev: Vec<f64>,
    /// `K_rr^{-1} F_r`.
    y: Vec<f64>,
    prev: DiscreteState,
}

#[derive(Debug, Clone)]
pub struct ReducedPropagator {
    mats: Arc<SystemMatrices>,
    dt: f64,
    mode: PropagationMode,
    /// Global indices of the `r` and `f` unknowns, in local order.
    r_idx: Vec<usize>,
    f_idx: Vec<usize>,
    k_rr: LdlFactor,
    k_rf: CscMatrix,
    k_fr: CscMatrix,
    /// Values of `K_ff - S0` on the shared pattern, split by dependence.
    pattern: CscMatrix,
    base: Vec<f64>,
    per_theta: Vec<Vec<f64>>,
    per_width: Vec<Vec<f64>>,
    symbolic: Arc<SymbolicLdl>,
    n_uf: usize,
    n_pf: usize,
}

impl ReducedPropagator {
    pub fn new(mats: Arc<SystemMatrices>, dt: f64, mode: PropagationMode) -> Result<Self> {
        let layout = mats.layout;
        let n = layout.len();
        let n_u = layout.n_u();
        let r_idx: Vec<usize> = (0..layout.n_flux).chain(n_u..n_u + layout.n_pressure).collect();
        let f_idx: Vec<usize> = (layout.n_flux..n_u).chain(n_u + layout.n_pressure..n).collect();
        let mut r_map = vec![DROP; n];
        let mut f_map = vec![DROP; n];
        for (k, &g) in r_idx.iter().enumerate() {
            r_map[g] = k;
        }
        for (k, &g) in f_idx.iter().enumerate() {
            f_map[g] = k;
        }
        let (n_r, n_f) = (r_idx.len(), f_idx.len());
        let n_uf = layout.n_fracture_flux;
        let n_pf = layout.n_fracture_pressure;

        // Split the matrix at unit widths; then peel off the width-dependent parts.
        let ones = vec![1.0; mats.n_fractures()];
        let k = solver_matrix(&mats, dt, &ones)?;
        let k_rr = k.select(&r_map, n_r, &r_map, n_r);
        let k_rf = k.select(&r_map, n_r, &f_map, n_f);
        let k_fr = k.select(&f_map, n_f, &r_map, n_r);
        let k_ff = k.select(&f_map, n_f, &f_map, n_f);
        let k_rr = LdlFactor::new(&k_rr, &[])?;

        let mut theta_parts: Vec<Triplets> = Vec::with_capacity(mats.n_fractures());
        for a in &mats.a_fracture {
            let mut t = Triplets::new(n_f, n_f);
            for j in 0..a.n_cols {
                for (i, v) in a.column(j) {
                    if !mats.is_constrained[i] && !mats.is_constrained[j] {
                        t.push(f_map[i], f_map[j], v);
                    }
                }
            }
            theta_parts.push(t);
        }
        let mut width_parts: Vec<Triplets> = (0..mats.n_fractures()).map(|_| Triplets::new(n_f, n_f)).collect();
        if let FractureStorage::Scaled { porosity } = mats.coefficients.fracture_storage {
            for (e, &(f, len)) in mats.fracture_edges.iter().enumerate() {
                let loc = n_uf + e;
                width_parts[f].push(loc, loc, -porosity * len / dt);
            }
        }

        // S0 on the fracture pressures, one K_rr solve per column.
        let mut s0 = Triplets::new(n_f, n_f);
        if mode == PropagationMode::Companion {
            for j in n_uf..n_uf + n_pf {
                let col: Vec<(usize, f64)> = k_rf.column(j).collect();
                if col.is_empty() {
                    continue;
                }
                let mut rhs = vec![0.0; n_r];
                for (i, v) in col {
                    rhs[i] = v;
                }
                let z = k_rr.solve(&rhs)?;
                for (i, v) in k_fr.mul_vec(&z).into_iter().enumerate() {
                    if v != 0.0 {
                        s0.push(i, j, -v);
                    }
                }
            }
        }

        // Shared pattern: K_ff plus the dense fracture-pressure block.
        let mut zeros = Triplets::new(n_f, n_f);
        zeros.extend_csc(&k_ff, 0, 0, 0.0);
        for i in n_uf..n_uf + n_pf {
            for j in n_uf..n_uf + n_pf {
                zeros.push(i, j, 0.0);
            }
        }
        let on_pattern = |t: &Triplets, scale: f64| -> Vec<f64> {
            let mut z = zeros.clone();
            z.extend_scaled(t, 0, 0, scale);
            z.to_csc().values
        };
        let pattern = zeros.to_csc();
        let mut base = {
            let mut z = zeros.clone();
            z.extend_csc(&k_ff, 0, 0, 1.0);
            z.extend_scaled(&s0, 0, 0, 1.0);
            z.to_csc().values
        };
        let per_theta: Vec<Vec<f64>> = theta_parts.iter().map(|t| on_pattern(t, 1.0)).collect();
        let per_width: Vec<Vec<f64>> = width_parts.iter().map(|t| on_pattern(t, 1.0)).collect();
        // K_ff was taken at unit widths: remove those contributions from the base.
        for part in per_theta.iter().chain(&per_width) {
            for (b, p) in base.iter_mut().zip(part) {
                *b -= p;
            }
        }

        let order: Vec<usize> = (0..n_uf).chain(n_uf + n_pf..n_f).chain(n_uf..n_uf + n_pf).collect();
        let symbolic = Arc::new(SymbolicLdl::with_ordering(&pattern, order)?);
        Ok(Self {
            mats,
            dt,
            mode,
            r_idx,
            f_idx,
            k_rr,
            k_rf,
            k_fr,
            pattern,
            base,
            per_theta,
            per_width,
            symbolic,
            n_uf,
            n_pf,
        })
    }

    pub fn matrices(&self) -> &Arc<SystemMatrices> {
        &self.mats
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mode(&self) -> PropagationMode {
        self.mode
    }

    /// Number of observed values (fracture fluxes and pressures).
    pub fn n_observed(&self) -> usize {
        self.n_uf + self.n_pf
    }

    /// Size of the per-sample system.
    pub fn reduced_dim(&self) -> usize {
        self.f_idx.len()
    }

    /// Width-independent part of the step from `prev` with sources `load` at the new time.
    pub fn prepare(&self, prev: &DiscreteState, load: &[f64]) -> Result<PreparedStep> {
        let layout = &self.mats.layout;
        prev.check(layout)?;
        if load.len() != layout.n_p() {
            return Err(Error::Dimension { expected: layout.n_p(), found: load.len() });
        }
        let n_u = layout.n_u();
        let storage_rock = &self.mats.c_rock;
        let rhs_at = |g: usize| -> f64 {
            if g < n_u {
                if self.mats.is_constrained[g] {
                    0.0
                } else {
                    self.mats.g[g]
                }
            } else {
                let r = g - n_u;
                if r < layout.n_pressure {
                    -storage_rock[r] * prev.values[g] / self.dt - load[r]
                } else if r < layout.n_pressure + layout.n_fracture_pressure {
                    -load[r]
                } else {
                    0.0
                }
            }
        };
        let f_r: Vec<f64> = self.r_idx.iter().map(|&g| rhs_at(g)).collect();
        let mut rhs_base: Vec<f64> = self.f_idx.iter().map(|&g| rhs_at(g)).collect();
        let p_prev: Vec<f64> = (0..self.n_pf).map(|e| prev.values[layout.fracture_pressure(e)]).collect();
        if let FractureStorage::Fixed(phi) = self.mats.coefficients.fracture_storage {
            for (e, &(_, len)) in self.mats.fracture_edges.iter().enumerate() {
                rhs_base[self.n_uf + e] -= phi * len * p_prev[e] / self.dt;
            }
        }
        let y = match self.mode {
            PropagationMode::Companion => {
                let y = self.k_rr.solve(&f_r)?;
                for (b, v) in rhs_base.iter_mut().zip(self.k_fr.mul_vec(&y)) {
                    *b -= v;
                }
                y
            }
            PropagationMode::ClosedFracture => Vec::new(),
        };
        Ok(PreparedStep { step: prev.step, rhs_base, p_prev, y, prev: prev.clone() })
    }

    fn solve_fracture(&self, step: &PreparedStep, widths: &[f64]) -> Result<Vec<f64>> {
        self.mats.check_widths(widths)?;
        let mut values = self.base.clone();
        for (k, &d) in widths.iter().enumerate() {
            let theta = 1.0 / d;
            for (v, a) in values.iter_mut().zip(&self.per_theta[k]) {
                *v += theta * a;
            }
            for (v, c) in values.iter_mut().zip(&self.per_width[k]) {
                *v += d * c;
            }
        }
        let matrix = CscMatrix { values, ..self.pattern.clone() };
        let factor = LdlFactor::factor(self.symbolic.clone(), &matrix)?;
        let mut rhs = step.rhs_base.clone();
        if let FractureStorage::Scaled { porosity } = self.mats.coefficients.fracture_storage {
            for (e, &(f, len)) in self.mats.fracture_edges.iter().enumerate() {
                rhs[self.n_uf + e] -= widths[f] * porosity * len * step.p_prev[e] / self.dt;
            }
        }
        factor.solve(&rhs)
    }

    /// Predicted observation `H X_{n+1}` for the given widths.
    pub fn observe_next(&self, step: &PreparedStep, widths: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.solve_fracture(step, widths)?;
        x.truncate(self.n_observed());
        Ok(x)
    }

    /// Full next state. In closed-fracture mode the subdomain unknowns are
    /// carried over from the previous state.
    pub fn full_next(&self, step: &PreparedStep, widths: &[f64]) -> Result<DiscreteState> {
        let x_f = self.solve_fracture(step, widths)?;
        let mut values = step.prev.values.clone();
        for (&g, v) in self.f_idx.iter().zip(&x_f) {
            values[g] = *v;
        }
        if self.mode == PropagationMode::Companion {
            let correction = self.k_rr.solve(&self.k_rf.mul_vec(&x_f))?;
            for ((&g, y), c) in self.r_idx.iter().zip(&step.y).zip(&correction) {
                values[g] = y - c;
            }
        }
        let next = DiscreteState { step: step.step + 1, values };
        next.check(&self.mats.layout)?;
        Ok(next)
    }
}
