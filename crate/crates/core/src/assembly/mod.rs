//! Mixed finite element matrices: RT0/P0 in the subdomains, continuous
//! piecewise-linear flux and P0 pressure on the fractures.
//!
//! Global unknowns are ordered `[2D fluxes | fracture fluxes | 2D pressures |
//! fracture pressures | intersection multipliers]`; see [`DofLayout`].

mod boundary;
mod coefficients;
mod quadrature;

pub use boundary::{BoundaryConditions, Condition, FractureEndCondition, Wall, WallPatch};
pub use coefficients::{inverse_spd, FractureStorage, ModelCoefficients, Tensor};
pub use quadrature::{integrate_segment, integrate_triangle};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{EdgeKind, SegmentEnd, TriangularMesh};
use crate::linsolve::{CscMatrix, Triplets};

/// Volume and fracture source terms `q_i(x, t)` and `q_gamma(x, t)`.
pub trait Sources: Sync {
    fn rock(&self, _subdomain: usize, _x: [f64; 2], _t: f64) -> f64 {
        0.0
    }

    fn fracture(&self, _fracture: usize, _x: [f64; 2], _t: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoSources;

impl Sources for NoSources {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofLayout {
    pub n_flux: usize,
    pub n_fracture_flux: usize,
    pub n_pressure: usize,
    pub n_fracture_pressure: usize,
    pub n_multiplier: usize,
}

impl DofLayout {
    pub fn from_mesh(mesh: &TriangularMesh) -> Self {
        Self {
            n_flux: mesh.edges.len(),
            n_fracture_flux: mesh.fracture_nodes.len(),
            n_pressure: mesh.triangles.len(),
            n_fracture_pressure: mesh.fracture_edges.len(),
            n_multiplier: 0,
        }
    }

    /// Number of flux unknowns (2D and fracture).
    pub fn n_u(&self) -> usize {
        self.n_flux + self.n_fracture_flux
    }

    /// Number of pressure-like unknowns, multipliers included.
    pub fn n_p(&self) -> usize {
        self.n_pressure + self.n_fracture_pressure + self.n_multiplier
    }

    pub fn len(&self) -> usize {
        self.n_u() + self.n_p()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flux(&self, edge: usize) -> usize {
        edge
    }

    pub fn fracture_flux(&self, node: usize) -> usize {
        self.n_flux + node
    }

    pub fn pressure(&self, triangle: usize) -> usize {
        self.n_u() + triangle
    }

    pub fn fracture_pressure(&self, edge: usize) -> usize {
        self.n_u() + self.n_pressure + edge
    }

    pub fn multiplier(&self, k: usize) -> usize {
        self.n_u() + self.n_pressure + self.n_fracture_pressure + k
    }

    /// Row of a pressure-like unknown inside the `n_p` block.
    pub fn p_row(&self, global: usize) -> usize {
        global - self.n_u()
    }

    /// Observed coordinates: fracture fluxes followed by fracture pressures.
    pub fn observed(&self) -> Vec<usize> {
        let flux = (0..self.n_fracture_flux).map(|k| self.fracture_flux(k));
        let pressure = (0..self.n_fracture_pressure).map(|k| self.fracture_pressure(k));
        flux.chain(pressure).collect()
    }

    pub fn n_observed(&self) -> usize {
        self.n_fracture_flux + self.n_fracture_pressure
    }
}

/// Lengths of the edges opposite each vertex.
fn edge_lengths(p: &[[f64; 2]; 3]) -> [f64; 3] {
    core::array::from_fn(|k| {
        let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
        libm::hypot(b[0] - a[0], b[1] - a[1])
    })
}

fn area(p: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// RT0 basis function of the edge opposite vertex `k`, evaluated at `x`.
/// Its normal component is `signs[k]` on that edge (outward reference).
pub fn rt0_basis(p: &[[f64; 2]; 3], signs: &[f64; 3], k: usize, x: [f64; 2]) -> [f64; 2] {
    let c = signs[k] * edge_lengths(p)[k] / (2.0 * area(p));
    [c * (x[0] - p[k][0]), c * (x[1] - p[k][1])]
}

/// Local matrix `(K^{-1} phi_i, phi_j)_T`, integrated exactly by the edge-midpoint rule.
pub fn rt0_mass(p: &[[f64; 2]; 3], signs: &[f64; 3], k_inv: &Tensor) -> [[f64; 3]; 3] {
    let a = area(p);
    let mids: [[f64; 2]; 3] = core::array::from_fn(|j| {
        let (u, v) = (p[(j + 1) % 3], p[(j + 2) % 3]);
        [0.5 * (u[0] + v[0]), 0.5 * (u[1] + v[1])]
    });
    let mut m = [[0.0; 3]; 3];
    for x in mids {
        let phi: [[f64; 2]; 3] = core::array::from_fn(|k| rt0_basis(p, signs, k, x));
        for i in 0..3 {
            let kp =
                [k_inv[0][0] * phi[i][0] + k_inv[0][1] * phi[i][1], k_inv[1][0] * phi[i][0] + k_inv[1][1] * phi[i][1]];
            for j in 0..3 {
                m[i][j] += a / 3.0 * (kp[0] * phi[j][0] + kp[1] * phi[j][1]);
            }
        }
    }
    m
}

fn check_widths(mesh: &TriangularMesh, widths: &[f64]) -> Result<()> {
    let n = mesh.geometry.fractures.len();
    if widths.len() != n {
        return Err(Error::Dimension { expected: n, found: widths.len() });
    }
    if let Some(k) = widths.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::Coefficients(format!("width of fracture {k} must be positive, got {}", widths[k])));
    }
    Ok(())
}

fn rock_flux_mass(mesh: &TriangularMesh, coeffs: &ModelCoefficients, layout: &DofLayout) -> Result<Triplets> {
    let inv: Vec<Tensor> = coeffs.conductivity.iter().map(inverse_spd).collect::<Result<_>>()?;
    let n = layout.n_u();
    let mut t = Triplets::with_capacity(n, n, 9 * mesh.triangles.len());
    for (k, tri) in mesh.triangles.iter().enumerate() {
        let m = rt0_mass(&mesh.triangle_points(k), &tri.signs, &inv[tri.subdomain]);
        for i in 0..3 {
            for j in 0..3 {
                t.push(layout.flux(tri.edges[i]), layout.flux(tri.edges[j]), m[i][j]);
            }
        }
    }
    Ok(t)
}

/// Fracture flux mass of fracture `k` for unit width: `(1/K_gamma) (l/6) [[2,1],[1,2]]` per element.
fn fracture_flux_mass(mesh: &TriangularMesh, coeffs: &ModelCoefficients, layout: &DofLayout, k: usize) -> Triplets {
    let n = layout.n_u();
    let mut t = Triplets::new(n, n);
    for fe in mesh.fracture_edges.iter().filter(|fe| mesh.geometry.segments[fe.segment].fracture == k) {
        let s = fe.length / (6.0 * coeffs.fracture_conductivity);
        let [a, b] = fe.nodes.map(|node| layout.fracture_flux(node));
        t.push(a, a, 2.0 * s);
        t.push(a, b, s);
        t.push(b, a, s);
        t.push(b, b, 2.0 * s);
    }
    t
}

/// `A(d) = A_rock + sum_k (1/d_k) A_k`.
pub fn assemble_a(mesh: &TriangularMesh, coeffs: &ModelCoefficients, widths: &[f64]) -> Result<CscMatrix> {
    coeffs.validate(mesh.n_subdomains())?;
    check_widths(mesh, widths)?;
    let layout = DofLayout::from_mesh(mesh);
    let mut t = rock_flux_mass(mesh, coeffs, &layout)?;
    for (k, &d) in widths.iter().enumerate() {
        t.extend_scaled(&fracture_flux_mass(mesh, coeffs, &layout, k), 0, 0, 1.0 / d);
    }
    Ok(t.to_csc())
}

fn b_triplets(mesh: &TriangularMesh, layout: &DofLayout) -> Triplets {
    let mut t =
        Triplets::with_capacity(layout.n_p(), layout.n_u(), 3 * mesh.triangles.len() + 4 * mesh.fracture_edges.len());
    for (k, tri) in mesh.triangles.iter().enumerate() {
        for i in 0..3 {
            let e = tri.edges[i];
            t.push(layout.p_row(layout.pressure(k)), layout.flux(e), tri.signs[i] * mesh.edges[e].length);
        }
    }
    for (k, fe) in mesh.fracture_edges.iter().enumerate() {
        let row = layout.p_row(layout.fracture_pressure(k));
        t.push(row, layout.fracture_flux(fe.nodes[0]), -1.0);
        t.push(row, layout.fracture_flux(fe.nodes[1]), 1.0);
        for side in fe.sides {
            t.push(row, layout.flux(side), -fe.length);
        }
    }
    t
}

/// `B[mu, v] = b(v, mu)` over subdomain and fracture pressures (no multipliers).
pub fn assemble_b(mesh: &TriangularMesh) -> CscMatrix {
    b_triplets(mesh, &DofLayout::from_mesh(mesh)).to_csc()
}

/// Diagonal of `C`: `phi_i |T|` per triangle, `phi_gamma |E|` per fracture edge.
pub fn assemble_c(mesh: &TriangularMesh, coeffs: &ModelCoefficients, widths: &[f64]) -> Result<Vec<f64>> {
    coeffs.validate(mesh.n_subdomains())?;
    check_widths(mesh, widths)?;
    let layout = DofLayout::from_mesh(mesh);
    let mut c = vec![0.0; layout.n_p()];
    for (k, tri) in mesh.triangles.iter().enumerate() {
        c[layout.p_row(layout.pressure(k))] = coeffs.storage[tri.subdomain] * tri.area;
    }
    for (k, fe) in mesh.fracture_edges.iter().enumerate() {
        let d = widths[mesh.geometry.segments[fe.segment].fracture];
        c[layout.p_row(layout.fracture_pressure(k))] = coeffs.fracture_storage_for(d) * fe.length;
    }
    Ok(c)
}

/// Cell and fracture-edge integrals of the sources at time `t` (length `n_p`).
pub fn assemble_sources(mesh: &TriangularMesh, layout: &DofLayout, sources: &dyn Sources, t: f64) -> Vec<f64> {
    let mut l = vec![0.0; layout.n_p()];
    for (k, tri) in mesh.triangles.iter().enumerate() {
        l[layout.p_row(layout.pressure(k))] =
            integrate_triangle(mesh.triangle_points(k), |x| sources.rock(tri.subdomain, x, t));
    }
    for (k, fe) in mesh.fracture_edges.iter().enumerate() {
        let f = mesh.geometry.segments[fe.segment].fracture;
        let [a, b] = fe.vertices.map(|v| mesh.vertices[v]);
        l[layout.p_row(layout.fracture_pressure(k))] = integrate_segment(a, b, |x| sources.fracture(f, x, t));
    }
    l
}

/// Dirichlet contributions to the flux equations and the no-flow flux DOFs.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    /// Length `n_u`.
    pub g: Vec<f64>,
    /// Sorted flux indices fixed to zero.
    pub constrained: Vec<usize>,
}

pub fn assemble_boundary(mesh: &TriangularMesh, bc: &BoundaryConditions) -> Result<BoundaryData> {
    let layout = DofLayout::from_mesh(mesh);
    let geometry = &mesh.geometry;
    let tol = geometry.tolerance();
    let mut g = vec![0.0; layout.n_u()];
    let mut constrained = Vec::new();
    for (e, edge) in mesh.edges.iter().enumerate() {
        if let EdgeKind::Boundary { triangle } = edge.kind {
            match bc.wall_condition(&geometry.domain, mesh.edge_midpoint(e), tol)? {
                Condition::Pressure(p) => {
                    let tri = &mesh.triangles[triangle];
                    let local = tri.edges.iter().position(|&x| x == e).unwrap();
                    g[layout.flux(e)] = -tri.signs[local] * p * edge.length;
                }
                Condition::NoFlow => constrained.push(layout.flux(e)),
            }
        }
    }
    for (n, node) in mesh.fracture_nodes.iter().enumerate() {
        let Some(seg_end) = node.end else { continue };
        let p = mesh.vertices[node.vertex];
        if !geometry.domain.on_boundary(p, tol) {
            continue;
        }
        let seg = &geometry.segments[node.segment];
        let line = &geometry.fractures[seg.fracture];
        let q0 = line.point_at(line.start);
        let end = if (p[0] - q0[0]).abs() <= tol && (p[1] - q0[1]).abs() <= tol {
            SegmentEnd::Start
        } else {
            SegmentEnd::End
        };
        match bc.fracture_end_condition(seg.fracture, end)? {
            Condition::Pressure(v) => {
                // -[p v]_{start}^{end} moved to the right-hand side.
                g[layout.fracture_flux(n)] = match seg_end {
                    SegmentEnd::Start => v,
                    SegmentEnd::End => -v,
                };
            }
            Condition::NoFlow => constrained.push(layout.fracture_flux(n)),
        }
    }
    constrained.sort_unstable();
    Ok(BoundaryData { g, constrained })
}

/// Source vector `L_q` (length `n_p`) and boundary vector `G` (length `n_u`).
pub fn assemble_load(
    mesh: &TriangularMesh,
    sources: &dyn Sources,
    t: f64,
    bc: &BoundaryConditions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let layout = DofLayout::from_mesh(mesh);
    Ok((assemble_sources(mesh, &layout, sources, t), assemble_boundary(mesh, bc)?.g))
}

/// Width-independent pieces of the discrete system, assembled once per mesh.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub layout: DofLayout,
    pub coefficients: ModelCoefficients,
    /// Subdomain flux mass (`n_u x n_u`).
    pub a_rock: CscMatrix,
    /// Per fracture, its flux mass at unit width; enters `A` scaled by `1/d_k`.
    pub a_fracture: Vec<CscMatrix>,
    /// `n_p x n_u`, rows include intersection multipliers.
    pub b: CscMatrix,
    /// Subdomain part of the storage diagonal (length `n_p`).
    pub c_rock: Vec<f64>,
    /// Fracture index and length of every fracture edge.
    pub fracture_edges: Vec<(usize, f64)>,
    pub g: Vec<f64>,
    pub constrained: Vec<usize>,
    pub is_constrained: Vec<bool>,
    /// Vertex of every intersection multiplier.
    pub multiplier_vertices: Vec<usize>,
}

impl SystemMatrices {
    pub fn assemble(mesh: &TriangularMesh, coeffs: &ModelCoefficients, bc: &BoundaryConditions) -> Result<Self> {
        coeffs.validate(mesh.n_subdomains())?;
        let layout = DofLayout::from_mesh(mesh);
        let a_rock = rock_flux_mass(mesh, coeffs, &layout)?.to_csc();
        let a_fracture =
            (0..mesh.geometry.fractures.len()).map(|k| fracture_flux_mass(mesh, coeffs, &layout, k).to_csc()).collect();
        let b = b_triplets(mesh, &layout).to_csc();
        let mut c_rock = vec![0.0; layout.n_p()];
        for (k, tri) in mesh.triangles.iter().enumerate() {
            c_rock[layout.p_row(layout.pressure(k))] = coeffs.storage[tri.subdomain] * tri.area;
        }
        let fracture_edges =
            mesh.fracture_edges.iter().map(|fe| (mesh.geometry.segments[fe.segment].fracture, fe.length)).collect();
        let BoundaryData { g, constrained } = assemble_boundary(mesh, bc)?;
        let mut is_constrained = vec![false; layout.n_u()];
        for &i in &constrained {
            is_constrained[i] = true;
        }
        Ok(Self {
            layout,
            coefficients: coeffs.clone(),
            a_rock,
            a_fracture,
            b,
            c_rock,
            fracture_edges,
            g,
            constrained,
            is_constrained,
            multiplier_vertices: Vec::new(),
        })
    }

    pub fn n_fractures(&self) -> usize {
        self.a_fracture.len()
    }

    pub fn check_widths(&self, widths: &[f64]) -> Result<()> {
        if widths.len() != self.n_fractures() {
            return Err(Error::Dimension { expected: self.n_fractures(), found: widths.len() });
        }
        if let Some(k) = widths.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Coefficients(format!("width of fracture {k} must be positive, got {}", widths[k])));
        }
        Ok(())
    }

    /// `A(d)` with every entry of the pattern present, whatever the widths.
    pub fn flux_mass(&self, widths: &[f64]) -> Result<CscMatrix> {
        self.check_widths(widths)?;
        let n = self.layout.n_u();
        let mut t =
            Triplets::with_capacity(n, n, self.a_rock.nnz() + self.a_fracture.iter().map(|a| a.nnz()).sum::<usize>());
        t.extend_csc(&self.a_rock, 0, 0, 1.0);
        for (a, &d) in self.a_fracture.iter().zip(widths) {
            t.extend_csc(a, 0, 0, 1.0 / d);
        }
        Ok(t.to_csc())
    }

    /// Storage diagonal `C(d)` (length `n_p`, zero on multipliers).
    pub fn storage(&self, widths: &[f64]) -> Result<Vec<f64>> {
        self.check_widths(widths)?;
        let mut c = self.c_rock.clone();
        let offset = self.layout.n_pressure;
        for (k, &(f, len)) in self.fracture_edges.iter().enumerate() {
            c[offset + k] = self.coefficients.fracture_storage_for(widths[f]) * len;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, generate_mesh, CaseSpec, Rect};
    use nalgebra::DMatrix;

    fn case1_mesh(h: f64) -> TriangularMesh {
        let g =
            build_geometry(&CaseSpec::Single { domain: Rect::new(0.0, 2.0, 0.0, 1.0), x: 1.0, width: 1e-3 }).unwrap();
        generate_mesh(&g, h).unwrap()
    }

    fn square_mesh(h: f64) -> TriangularMesh {
        let g =
            build_geometry(&CaseSpec::Single { domain: Rect::new(0.0, 1.0, 0.0, 1.0), x: 0.5, width: 1e-3 }).unwrap();
        generate_mesh(&g, h).unwrap()
    }

    #[test]
    fn reference_element_mass_matches_monomial_integrals() {
        // On (0,0),(1,0),(0,1): int 1 = 1/2, int x = int y = 1/6,
        // int x^2 = int y^2 = 1/12, int xy = 1/24.
        let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let signs = [1.0, -1.0, 1.0];
        let len = [2f64.sqrt(), 1.0, 1.0];
        let m = rt0_mass(&p, &signs, &[[1.0, 0.0], [0.0, 1.0]]);
        for i in 0..3 {
            for j in 0..3 {
                // (x - Pi).(x - Pj) = x^2 + y^2 - (Pi+Pj).x + Pi.Pj
                let (a, b) = (p[i], p[j]);
                let integral = 1.0 / 12.0 + 1.0 / 12.0 - (a[0] + b[0]) / 6.0 - (a[1] + b[1]) / 6.0
                    + (a[0] * b[0] + a[1] * b[1]) / 2.0;
                // phi_k = s_k |e_k| / (2 |T|) (x - P_k) with |T| = 1/2.
                let exact = signs[i] * signs[j] * len[i] * len[j] * integral;
                assert!((m[i][j] - exact).abs() < 1e-15, "({i},{j}): {} vs {exact}", m[i][j]);
            }
        }
    }

    #[test]
    fn element_mass_agrees_with_high_order_quadrature() {
        let p = [[0.3, 0.1], [1.4, 0.5], [0.2, 1.2]];
        let signs = [1.0, 1.0, -1.0];
        let k = [[2.0, 0.3], [0.3, 0.5]];
        let kinv = inverse_spd(&k).unwrap();
        let m = rt0_mass(&p, &signs, &kinv);
        for i in 0..3 {
            for j in 0..3 {
                let q = integrate_triangle(p, |x| {
                    let (u, v) = (rt0_basis(&p, &signs, i, x), rt0_basis(&p, &signs, j, x));
                    u[0] * (kinv[0][0] * v[0] + kinv[0][1] * v[1]) + u[1] * (kinv[1][0] * v[0] + kinv[1][1] * v[1])
                });
                assert!((m[i][j] - q).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn basis_has_unit_normal_flux_on_its_edge_only() {
        let p = [[0.3, 0.1], [1.4, 0.5], [0.2, 1.2]];
        let signs = [1.0; 3];
        for k in 0..3 {
            for e in 0..3 {
                let (a, b) = (p[(e + 1) % 3], p[(e + 2) % 3]);
                let t = [b[0] - a[0], b[1] - a[1]];
                let len = libm::hypot(t[0], t[1]);
                let n = [t[1] / len, -t[0] / len];
                let flux = integrate_segment(a, b, |x| {
                    let v = rt0_basis(&p, &signs, k, x);
                    v[0] * n[0] + v[1] * n[1]
                });
                let expected = if e == k { len } else { 0.0 };
                assert!((flux - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn one_dimensional_flux_mass() {
        let mesh = case1_mesh(0.1);
        let mut coeffs = ModelCoefficients::uniform(2);
        coeffs.fracture_conductivity = 1.0;
        let layout = DofLayout::from_mesh(&mesh);
        let a = assemble_a(&mesh, &coeffs, &[1.0]).unwrap();
        let ell = 0.1;
        // Analytic element integrals of the hat functions: int N_a^2 = l/3, int N_a N_b = l/6.
        let fe = &mesh.fracture_edges[3];
        let [i, j] = fe.nodes.map(|n| layout.fracture_flux(n));
        assert!((a.get(i, j) - ell / 6.0).abs() < 1e-15);
        // Interior nodes collect l/3 from both neighbours.
        assert!((a.get(i, i) - 2.0 * ell / 3.0).abs() < 1e-15);
        let first = layout.fracture_flux(mesh.segment_nodes[0][0]);
        assert!((a.get(first, first) - ell / 3.0).abs() < 1e-15);
    }

    #[test]
    fn doubling_width_halves_fracture_block_exactly() {
        let mesh = case1_mesh(0.1);
        let coeffs = ModelCoefficients::uniform(2);
        let layout = DofLayout::from_mesh(&mesh);
        let a1 = assemble_a(&mesh, &coeffs, &[1e-3]).unwrap();
        let a2 = assemble_a(&mesh, &coeffs, &[2e-3]).unwrap();
        assert!(a1.same_pattern(&a2));
        for j in 0..a1.n_cols {
            let (c1, c2) = (a1.column(j), a2.column(j));
            for ((i, v1), (_, v2)) in c1.zip(c2) {
                if i >= layout.n_flux && j >= layout.n_flux {
                    assert_eq!(v2, 0.5 * v1);
                } else {
                    assert_eq!(v2, v1);
                }
            }
        }
    }

    #[test]
    fn flux_mass_is_spd() {
        let mesh = square_mesh(0.1);
        let coeffs = ModelCoefficients::uniform(2);
        let a = assemble_a(&mesh, &coeffs, &[1e-3]).unwrap();
        assert!(a.is_symmetric(1e-14));
        let dense = a.to_dense();
        let n = a.n_rows;
        let m = DMatrix::from_fn(n, n, |i, j| dense[i][j]);
        let eig = m.symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "smallest eigenvalue {min}");
    }

    #[test]
    fn divergence_entries_match_boundary_flux() {
        let mesh = case1_mesh(0.25);
        let layout = DofLayout::from_mesh(&mesh);
        let b = assemble_b(&mesh);
        for (k, tri) in mesh.triangles.iter().enumerate() {
            let p = mesh.triangle_points(k);
            for i in 0..3 {
                // Divergence theorem: flux of phi_i through the boundary of T.
                let mut flux = 0.0;
                for e in 0..3 {
                    let (a, c) = (p[(e + 1) % 3], p[(e + 2) % 3]);
                    let t = [c[0] - a[0], c[1] - a[1]];
                    let len = libm::hypot(t[0], t[1]);
                    let n = [t[1] / len, -t[0] / len];
                    flux += integrate_segment(a, c, |x| {
                        let v = rt0_basis(&p, &tri.signs, i, x);
                        v[0] * n[0] + v[1] * n[1]
                    });
                }
                let entry = b.get(layout.p_row(layout.pressure(k)), tri.edges[i]);
                assert!((entry - flux).abs() < 1e-14);
                assert!((entry.abs() - mesh.edges[tri.edges[i]].length).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fracture_rows_pick_up_both_traces() {
        let mesh = case1_mesh(0.1);
        let layout = DofLayout::from_mesh(&mesh);
        let b = assemble_b(&mesh);
        for (k, fe) in mesh.fracture_edges.iter().enumerate() {
            let row = layout.p_row(layout.fracture_pressure(k));
            for side in fe.sides {
                assert_eq!(b.get(row, side), -fe.length);
            }
            assert_eq!(b.get(row, layout.fracture_flux(fe.nodes[0])), -1.0);
            assert_eq!(b.get(row, layout.fracture_flux(fe.nodes[1])), 1.0);
        }
    }

    #[test]
    fn global_divergence_vanishes_without_boundary_flux() {
        let mesh = case1_mesh(0.1);
        let layout = DofLayout::from_mesh(&mesh);
        let b = assemble_b(&mesh);
        let mut v: Vec<f64> = (0..layout.n_u()).map(|i| libm::sin(1.0 + i as f64)).collect();
        for (e, edge) in mesh.edges.iter().enumerate() {
            if matches!(edge.kind, EdgeKind::Boundary { .. }) {
                v[e] = 0.0;
            }
        }
        for (n, node) in mesh.fracture_nodes.iter().enumerate() {
            if node.end.is_some() {
                v[layout.fracture_flux(n)] = 0.0;
            }
        }
        let total: f64 = b.mul_vec(&v).iter().sum();
        assert!(total.abs() < 1e-12, "{total}");
    }

    #[test]
    fn storage_diagonal() {
        let mesh = case1_mesh(1.0 / 50.0);
        let coeffs = ModelCoefficients::uniform(2);
        let c = assemble_c(&mesh, &coeffs, &[0.001]).unwrap();
        let layout = DofLayout::from_mesh(&mesh);
        assert!((c[layout.p_row(layout.fracture_pressure(0))] - 2e-5).abs() < 1e-18);
        assert_eq!(c[0], 0.5 / 2500.0);
        // Area summation: total rock storage is |Omega_1| + |Omega_2|.
        let rock: f64 = c[..layout.n_pressure].iter().sum();
        let fracture: f64 = c[layout.n_pressure..].iter().sum();
        assert!((rock - 2.0).abs() < 1e-12);
        assert!((fracture - 0.001 * 1.0).abs() < 1e-15);

        let unit =
            generate_mesh(&crate::geometry::FractureGeometry::new(Rect::new(0.0, 1.0, 0.0, 1.0), vec![]).unwrap(), 1.0)
                .unwrap();
        let c = assemble_c(&unit, &ModelCoefficients::uniform(1), &[]).unwrap();
        assert_eq!(c, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_sources_give_zero_load() {
        let mesh = case1_mesh(0.1);
        let (l, g) = assemble_load(&mesh, &NoSources, 0.3, &BoundaryConditions::sealed()).unwrap();
        assert!(l.iter().all(|&v| v == 0.0));
        assert!(g.iter().all(|&v| v == 0.0));
        let (_, g) = assemble_load(&mesh, &NoSources, 0.3, &BoundaryConditions::homogeneous()).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirichlet_entry_matches_boundary_integral() {
        let mesh = case1_mesh(1.0 / 50.0);
        let bc = BoundaryConditions::sealed().with_patch(Wall::Left, 0.0, 1.0, Condition::Pressure(1.0));
        let data = assemble_boundary(&mesh, &bc).unwrap();
        let mut checked = 0;
        for (e, edge) in mesh.edges.iter().enumerate() {
            let EdgeKind::Boundary { triangle } = edge.kind else { continue };
            let mid = mesh.edge_midpoint(e);
            if mid[0] != 0.0 {
                assert!(data.constrained.binary_search(&e).is_ok());
                continue;
            }
            let tri = &mesh.triangles[triangle];
            let p = mesh.triangle_points(triangle);
            let local = tri.edges.iter().position(|&x| x == e).unwrap();
            let [a, b] = edge.vertices.map(|v| mesh.vertices[v]);
            // -int_e p_D v.n with the outward normal n = (-1, 0) on the left wall.
            let oracle = -integrate_segment(a, b, |x| -rt0_basis(&p, &tri.signs, local, x)[0]);
            assert!((data.g[e] - oracle).abs() < 1e-15);
            assert!((data.g[e].abs() - 1.0 / 50.0).abs() < 1e-15);
            checked += 1;
        }
        assert_eq!(checked, 50);
    }

    #[test]
    fn fracture_end_pressures_enter_with_orientation() {
        let mesh = case1_mesh(0.1);
        let layout = DofLayout::from_mesh(&mesh);
        let bc = BoundaryConditions::sealed()
            .with_fracture_end(0, SegmentEnd::Start, Condition::Pressure(1.0))
            .with_fracture_end(0, SegmentEnd::End, Condition::Pressure(0.25));
        let data = assemble_boundary(&mesh, &bc).unwrap();
        let nodes = &mesh.segment_nodes[0];
        assert_eq!(data.g[layout.fracture_flux(nodes[0])], 1.0);
        assert_eq!(data.g[layout.fracture_flux(*nodes.last().unwrap())], -0.25);
        assert!(!data.constrained.contains(&layout.fracture_flux(nodes[0])));
    }

    #[test]
    fn conflicting_wall_conditions_are_rejected() {
        let mesh = case1_mesh(0.1);
        let bc = BoundaryConditions::sealed().with_patch(Wall::Bottom, 0.0, 1.0, Condition::Pressure(1.0)).with_patch(
            Wall::Bottom,
            0.5,
            2.0,
            Condition::NoFlow,
        );
        assert!(matches!(assemble_boundary(&mesh, &bc), Err(Error::Boundary(_))));
    }

    #[test]
    fn non_positive_width_is_rejected() {
        let mesh = case1_mesh(0.1);
        let coeffs = ModelCoefficients::uniform(2);
        assert!(assemble_a(&mesh, &coeffs, &[0.0]).is_err());
        assert!(assemble_a(&mesh, &coeffs, &[-1e-3]).is_err());
    }

    #[test]
    fn system_pieces_reproduce_free_functions() {
        let mesh = case1_mesh(0.1);
        let coeffs = ModelCoefficients::uniform(2);
        let sys = SystemMatrices::assemble(&mesh, &coeffs, &BoundaryConditions::homogeneous()).unwrap();
        let a = sys.flux_mass(&[2e-3]).unwrap();
        let a_ref = assemble_a(&mesh, &coeffs, &[2e-3]).unwrap();
        let (x, y) = (a.to_dense(), a_ref.to_dense());
        for i in 0..a.n_rows {
            for j in 0..a.n_cols {
                assert!((x[i][j] - y[i][j]).abs() <= 1e-12 * (1.0 + y[i][j].abs()));
            }
        }
        assert_eq!(sys.storage(&[2e-3]).unwrap(), assemble_c(&mesh, &coeffs, &[2e-3]).unwrap());
    }
}
