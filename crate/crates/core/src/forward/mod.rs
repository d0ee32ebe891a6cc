//! Backward Euler time stepping of the mixed system.
//!
//! The solver works with the symmetric form
//! `[[A, -B^T], [-B, -C/dt]] [u; p] = [G; -C p_prev/dt - L]`, which is the
//! block system `[[A, -B^T], [-dt B, -C]]` with its pressure rows divided by `dt`.

mod reduced;

pub use reduced::{PreparedStep, PropagationMode, ReducedPropagator};

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{integrate_segment, integrate_triangle, DofLayout, SystemMatrices};
use crate::error::{Error, Result};
use crate::geometry::{SegmentEnd, TriangularMesh};
use crate::linsolve::{norm_inf, CscMatrix, LdlFactor, SymbolicLdl, Triplets};

/// Fluxes and pressures at time step `step`, ordered by [`DofLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    pub step: usize,
    pub values: Vec<f64>,
}

impl DiscreteState {
    pub fn zeros(layout: &DofLayout) -> Self {
        Self { step: 0, values: vec![0.0; layout.len()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fluxes<'a>(&'a self, layout: &DofLayout) -> &'a [f64] {
        &self.values[..layout.n_u()]
    }

    /// Pressure block, multipliers included.
    pub fn pressures<'a>(&'a self, layout: &DofLayout) -> &'a [f64] {
        &self.values[layout.n_u()..]
    }

    pub fn check(&self, layout: &DofLayout) -> Result<()> {
        if self.values.len() != layout.len() {
            return Err(Error::Dimension { expected: layout.len(), found: self.values.len() });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        Ok(())
    }
}

/// Initial state from cell averages of the initial pressures; fluxes start at zero.
pub fn initial_state(
    mesh: &TriangularMesh,
    layout: &DofLayout,
    p0: impl Fn(usize, [f64; 2]) -> f64,
    p0_fracture: impl Fn(usize, [f64; 2]) -> f64,
) -> DiscreteState {
    let mut x = DiscreteState::zeros(layout);
    for (k, tri) in mesh.triangles.iter().enumerate() {
        x.values[layout.pressure(k)] = integrate_triangle(mesh.triangle_points(k), |p| p0(tri.subdomain, p)) / tri.area;
    }
    for (k, fe) in mesh.fracture_edges.iter().enumerate() {
        let f = mesh.geometry.segments[fe.segment].fracture;
        let [a, b] = fe.vertices.map(|v| mesh.vertices[v]);
        x.values[layout.fracture_pressure(k)] = integrate_segment(a, b, |p| p0_fracture(f, p)) / fe.length;
    }
    x
}

/// Adds the coupling conditions at the intersection located at mesh vertex
/// `vertex`: one shared pressure (a multiplier entering every incident
/// segment end) and zero net flux out of the point.
pub fn apply_intersection_constraints(
    mats: &SystemMatrices,
    mesh: &TriangularMesh,
    vertex: usize,
) -> Result<SystemMatrices> {
    if mats.multiplier_vertices.contains(&vertex) {
        return Err(Error::Constraint(format!("vertex {vertex} is already constrained")));
    }
    let nodes = mesh
        .intersection_nodes()
        .into_iter()
        .find(|nodes| nodes.first().is_some_and(|&(n, _)| mesh.fracture_nodes[n].vertex == vertex))
        .ok_or_else(|| Error::Constraint(format!("vertex {vertex} is not a fracture intersection")))?;
    let old = mats.layout;
    for &(n, _) in &nodes {
        if mats.is_constrained[old.fracture_flux(n)] {
            return Err(Error::Constraint(format!("fracture node {n} at vertex {vertex} carries a no-flow condition")));
        }
    }
    let mut layout = old;
    layout.n_multiplier += 1;
    let row = layout.p_row(layout.multiplier(old.n_multiplier));
    let mut t = Triplets::with_capacity(layout.n_p(), layout.n_u(), mats.b.nnz() + nodes.len());
    t.extend_csc(&mats.b, 0, 0, 1.0);
    for &(n, end) in &nodes {
        let s_out = match end {
            SegmentEnd::Start => -1.0,
            SegmentEnd::End => 1.0,
        };
        t.push(row, layout.fracture_flux(n), -s_out);
    }
    let mut out = mats.clone();
    out.layout = layout;
    out.b = t.to_csc();
    out.c_rock.push(0.0);
    out.multiplier_vertices.push(vertex);
    Ok(out)
}

/// Applies [`apply_intersection_constraints`] at every intersection of the mesh.
pub fn constrain_all_intersections(mats: &SystemMatrices, mesh: &TriangularMesh) -> Result<SystemMatrices> {
    let mut out = mats.clone();
    for nodes in mesh.intersection_nodes() {
        let vertex = mesh.fracture_nodes[nodes[0].0].vertex;
        out = apply_intersection_constraints(&out, mesh, vertex)?;
    }
    Ok(out)
}

/// Symmetric system matrix for the given widths. No-flow flux DOFs become
/// identity rows and columns.
pub fn solver_matrix(mats: &SystemMatrices, dt: f64, widths: &[f64]) -> Result<CscMatrix> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Coefficients(format!("time step must be positive, got {dt}")));
    }
    let layout = &mats.layout;
    let a = mats.flux_mass(widths)?;
    let c = mats.storage(widths)?;
    let n_u = layout.n_u();
    let n = layout.len();
    let cons = &mats.is_constrained;
    let mut t = Triplets::with_capacity(n, n, a.nnz() + 2 * mats.b.nnz() + layout.n_p());
    for j in 0..n_u {
        if cons[j] {
            t.push(j, j, 1.0);
            continue;
        }
        for (i, v) in a.column(j) {
            if !cons[i] {
                t.push(i, j, v);
            }
        }
        for (r, v) in mats.b.column(j) {
            t.push(n_u + r, j, -v);
            t.push(j, n_u + r, -v);
        }
    }
    for (r, &cr) in c.iter().enumerate().take(layout.n_pressure + layout.n_fracture_pressure) {
        t.push(n_u + r, n_u + r, -cr / dt);
    }
    Ok(t.to_csc())
}

/// Right-hand side of the symmetric system.
pub fn solver_rhs(
    mats: &SystemMatrices,
    dt: f64,
    storage: &[f64],
    prev: &DiscreteState,
    load: &[f64],
) -> Result<Vec<f64>> {
    let layout = &mats.layout;
    prev.check(layout)?;
    if load.len() != layout.n_p() {
        return Err(Error::Dimension { expected: layout.n_p(), found: load.len() });
    }
    let n_u = layout.n_u();
    let mut rhs = vec![0.0; layout.len()];
    for i in 0..n_u {
        if !mats.is_constrained[i] {
            rhs[i] = mats.g[i];
        }
    }
    let m0 = layout.n_pressure + layout.n_fracture_pressure;
    for r in 0..m0 {
        rhs[n_u + r] = -storage[r] * prev.values[n_u + r] / dt - load[r];
    }
    Ok(rhs)
}

fn multiplier_indices(layout: &DofLayout) -> Vec<usize> {
    (0..layout.n_multiplier).map(|k| layout.multiplier(k)).collect()
}

/// The block system for fixed widths, factored once and reused for every step.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    mats: Arc<SystemMatrices>,
    dt: f64,
    widths: Vec<f64>,
    storage: Vec<f64>,
    factor: LdlFactor,
}

impl BlockSystem {
    pub fn new(mats: Arc<SystemMatrices>, dt: f64, widths: &[f64]) -> Result<Self> {
        let k = solver_matrix(&mats, dt, widths)?;
        let symbolic = Arc::new(SymbolicLdl::analyze(&k, &multiplier_indices(&mats.layout))?);
        Self::with_matrix(mats, dt, widths, symbolic, &k)
    }

    /// Reuses a symbolic analysis made for another set of widths.
    pub fn with_symbolic(
        mats: Arc<SystemMatrices>,
        dt: f64,
        widths: &[f64],
        symbolic: Arc<SymbolicLdl>,
    ) -> Result<Self> {
        let k = solver_matrix(&mats, dt, widths)?;
        Self::with_matrix(mats, dt, widths, symbolic, &k)
    }

    fn with_matrix(
        mats: Arc<SystemMatrices>,
        dt: f64,
        widths: &[f64],
        symbolic: Arc<SymbolicLdl>,
        k: &CscMatrix,
    ) -> Result<Self> {
        let factor = LdlFactor::factor(symbolic, k)?;
        let storage = mats.storage(widths)?;
        Ok(Self { mats, dt, widths: widths.to_vec(), storage, factor })
    }

    pub fn matrices(&self) -> &Arc<SystemMatrices> {
        &self.mats
    }

    pub fn layout(&self) -> &DofLayout {
        &self.mats.layout
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn symbolic(&self) -> &Arc<SymbolicLdl> {
        self.factor.symbolic()
    }

    /// Storage diagonal `C(d)` (length `n_p`).
    pub fn storage(&self) -> &[f64] {
        &self.storage
    }

    /// Symmetric matrix actually factored.
    pub fn solver_matrix(&self) -> Result<CscMatrix> {
        solver_matrix(&self.mats, self.dt, &self.widths)
    }

    /// The matrix in block form `[[A, -B^T], [-dt B, -C]]`.
    pub fn lambda_matrix(&self) -> Result<CscMatrix> {
        let k = self.solver_matrix()?;
        let n_u = self.layout().n_u();
        let mut t = Triplets::with_capacity(k.n_rows, k.n_cols, k.nnz());
        for j in 0..k.n_cols {
            for (i, v) in k.column(j) {
                t.push(i, j, if i >= n_u { self.dt * v } else { v });
            }
        }
        Ok(t.to_csc())
    }

    pub fn zero_load(&self) -> Vec<f64> {
        vec![0.0; self.layout().n_p()]
    }

    /// One backward Euler step with source vector `load` at the new time.
    pub fn step(&self, prev: &DiscreteState, load: &[f64]) -> Result<DiscreteState> {
        let rhs = solver_rhs(&self.mats, self.dt, &self.storage, prev, load)?;
        let values = self.factor.solve(&rhs)?;
        let next = DiscreteState { step: prev.step + 1, values };
        next.check(self.layout())?;
        Ok(next)
    }

    /// Largest relative violation of the discrete mass balance
    /// `C (p - p_prev)/dt + B u - L = 0` over the pressure rows. The scale is
    /// the largest row sum of the magnitudes of all contributions, since the
    /// fracture rows balance large fluxes that mostly cancel.
    pub fn mass_balance_residual(&self, prev: &DiscreteState, next: &DiscreteState, load: &[f64]) -> f64 {
        let layout = self.layout();
        let n_u = layout.n_u();
        let m0 = layout.n_pressure + layout.n_fracture_pressure;
        let u = next.fluxes(layout);
        let bu = self.mats.b.mul_vec(u);
        let abs_u: Vec<f64> = u.iter().map(|v| v.abs()).collect();
        let abs_b = CscMatrix { values: self.mats.b.values.iter().map(|v| v.abs()).collect(), ..self.mats.b.clone() };
        let abs_bu = abs_b.mul_vec(&abs_u);
        let mut scale = 0.0f64;
        let mut worst = 0.0f64;
        for r in 0..m0 {
            let now = self.storage[r] * next.values[n_u + r] / self.dt;
            let before = self.storage[r] * prev.values[n_u + r] / self.dt;
            worst = worst.max((now - before + bu[r] - load[r]).abs());
            scale = scale.max(now.abs() + before.abs() + abs_bu[r] + load[r].abs());
        }
        if scale == 0.0 {
            worst
        } else {
            worst / scale
        }
    }

    /// Net flux out of every constrained intersection.
    pub fn intersection_flux_sums(&self, state: &DiscreteState) -> Vec<f64> {
        intersection_flux_sums(&self.mats, state)
    }

    /// For every constrained intersection, the end pressure each incident
    /// segment sees, recovered from its own flux equation at the shared node.
    /// All entries of one intersection agree when the pressure is shared.
    pub fn intersection_end_pressures(&self, state: &DiscreteState) -> Result<Vec<Vec<f64>>> {
        let layout = self.layout();
        state.check(layout)?;
        let k = self.solver_matrix()?;
        let mut out = Vec::with_capacity(layout.n_multiplier);
        for m in 0..layout.n_multiplier {
            let col = layout.multiplier(m);
            let mut ends = Vec::new();
            for (row, coef) in k.column(col) {
                if row >= layout.n_u() {
                    continue;
                }
                // Row `row` of the symmetric matrix is its column.
                let mut rest = 0.0;
                for (j, v) in k.column(row) {
                    if j != col {
                        rest += v * state.values[j];
                    }
                }
                let rhs = if self.mats.is_constrained[row] { 0.0 } else { self.mats.g[row] };
                ends.push((rhs - rest) / coef);
            }
            out.push(ends);
        }
        Ok(out)
    }
}

/// Net flux `sum s_out u` out of every constrained intersection.
pub fn intersection_flux_sums(mats: &SystemMatrices, state: &DiscreteState) -> Vec<f64> {
    let layout = &mats.layout;
    let bu = mats.b.mul_vec(state.fluxes(layout));
    let first = layout.n_pressure + layout.n_fracture_pressure;
    bu[first..].iter().map(|v| -v).collect()
}

/// `X_0, X_1, ..., X_N`; `load(n)` returns the source vector at `t^n`.
pub fn simulate(
    sys: &BlockSystem,
    x0: &DiscreteState,
    n_steps: usize,
    mut load: impl FnMut(usize) -> Vec<f64>,
) -> Result<Vec<DiscreteState>> {
    if n_steps == 0 {
        return Err(Error::Coefficients("simulation needs at least one step".into()));
    }
    x0.check(sys.layout())?;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(x0.clone());
    for n in 1..=n_steps {
        let l = load(n);
        let next = sys.step(&out[n - 1], &l)?;
        out.push(next);
    }
    Ok(out)
}

/// `c_phi(p, p)` for the pressure block of `state`.
pub fn storage_energy(layout: &DofLayout, storage: &[f64], state: &DiscreteState) -> f64 {
    let p = state.pressures(layout);
    storage.iter().zip(p).map(|(c, p)| c * p * p).sum()
}

/// Relative infinity-norm distance, used by tests and the harness.
pub fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm_inf(&diff) / norm_inf(b).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests;
