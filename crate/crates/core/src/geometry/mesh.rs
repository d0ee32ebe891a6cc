use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{FractureGeometry, SegmentEnd};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    /// Counter-clockwise vertex indices.
    pub vertices: [usize; 3],
    pub subdomain: usize,
    /// Flux DOF (edge index) of the edge opposite each vertex.
    pub edges: [usize; 3],
    /// `+1` when the edge's reference normal points out of this triangle.
    pub signs: [f64; 3],
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Interior {
        triangles: [usize; 2],
    },
    Boundary {
        triangle: usize,
    },
    /// One side of a fracture edge: the trace of a subdomain mesh on the fracture.
    Fracture {
        triangle: usize,
        fracture_edge: usize,
        side: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshEdge {
    /// Lower vertex index first.
    pub vertices: [usize; 2],
    pub kind: EdgeKind,
    /// Reference unit normal. Interior and boundary edges use the rotated
    /// lower-to-higher tangent; fracture sides use their triangle's outward normal.
    pub normal: [f64; 2],
    pub length: f64,
    pub subdomain: usize,
}

/// 1D element of a fracture segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FractureEdge {
    pub segment: usize,
    /// Vertices in tangent order.
    pub vertices: [usize; 2],
    /// Fracture flux nodes at the two ends, in tangent order.
    pub nodes: [usize; 2],
    /// 2D flux DOFs of the traces on side 0 (`-n`) and side 1 (`+n`).
    pub sides: [usize; 2],
    pub length: f64,
}

/// Node of the continuous piecewise-linear fracture flux.
#[derive(Debug, Clone, PartialEq)]
pub struct FractureNode {
    pub vertex: usize,
    pub segment: usize,
    /// Set when the node is an end point of its segment.
    pub end: Option<SegmentEnd>,
}

/// Structured triangulation; every grid square is split along its
/// bottom-left to top-right diagonal.
#[derive(Debug, Clone)]
pub struct TriangularMesh {
    pub geometry: FractureGeometry,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<MeshEdge>,
    pub fracture_edges: Vec<FractureEdge>,
    pub fracture_nodes: Vec<FractureNode>,
    /// Node indices of each segment in tangent order.
    pub segment_nodes: Vec<Vec<usize>>,
    /// Fracture edge indices of each segment in tangent order.
    pub segment_edges: Vec<Vec<usize>>,
}

fn grid_count(length: f64, h: f64, what: &str) -> Result<usize> {
    let n = libm::round(length / h);
    if n < 1.0 || (n * h - length).abs() > 1e-9 * length.abs().max(1.0) {
        return Err(Error::Mesh(format!("mesh size {h} does not tile {what} of length {length}")));
    }
    Ok(n as usize)
}

fn grid_index(coord: f64, origin: f64, h: f64, what: &str) -> Result<usize> {
    let offset = coord - origin;
    let n = libm::round(offset / h);
    if n < 0.0 || (n * h - offset).abs() > 1e-9 * h.max(offset.abs()) {
        return Err(Error::Mesh(format!("{what} at {coord} is not on a mesh line for h = {h}")));
    }
    Ok(n as usize)
}

fn outward_normal(a: [f64; 2], b: [f64; 2]) -> ([f64; 2], f64) {
    let t = [b[0] - a[0], b[1] - a[1]];
    let len = libm::hypot(t[0], t[1]);
    ([t[1] / len, -t[0] / len], len)
}

pub fn generate_mesh(geometry: &FractureGeometry, h: f64) -> Result<TriangularMesh> {
    TriangularMesh::new(geometry, h)
}

impl TriangularMesh {
    pub fn new(geometry: &FractureGeometry, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Mesh(format!("invalid mesh size {h}")));
        }
        let domain = geometry.domain;
        let nx = grid_count(domain.width(), h, "the domain width")?;
        let ny = grid_count(domain.height(), h, "the domain height")?;
        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([domain.x_min + i as f64 * h, domain.y_min + j as f64 * h]);
            }
        }

        // Fracture traces must follow mesh lines.
        let mut segment_vertices: Vec<Vec<usize>> = Vec::with_capacity(geometry.segments.len());
        for (k, seg) in geometry.segments.iter().enumerate() {
            let what = format!("fracture segment {k}");
            let (i0, j0, i1, j1) = match seg.orientation {
                super::Orientation::Vertical => {
                    let i = grid_index(seg.position, domain.x_min, h, &what)?;
                    (i, grid_index(seg.start, domain.y_min, h, &what)?, i, grid_index(seg.end, domain.y_min, h, &what)?)
                }
                super::Orientation::Horizontal => {
                    let j = grid_index(seg.position, domain.y_min, h, &what)?;
                    (grid_index(seg.start, domain.x_min, h, &what)?, j, grid_index(seg.end, domain.x_min, h, &what)?, j)
                }
            };
            let verts: Vec<usize> = if i0 == i1 {
                (j0..=j1).map(|j| vid(i0, j)).collect()
            } else {
                (i0..=i1).map(|i| vid(i, j0)).collect()
            };
            if verts.len() < 2 {
                return Err(Error::Mesh(format!("fracture segment {k} is shorter than one mesh edge")));
            }
            segment_vertices.push(verts);
        }

        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let centre = [domain.x_min + (i as f64 + 0.5) * h, domain.y_min + (j as f64 + 0.5) * h];
                let subdomain = geometry
                    .subdomain_at(centre)
                    .ok_or_else(|| Error::Mesh(format!("cell ({i}, {j}) is not inside any subdomain")))?;
                let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                for tri in [[v00, v10, v11], [v00, v11, v01]] {
                    triangles.push(Triangle {
                        vertices: tri,
                        subdomain,
                        edges: [0; 3],
                        signs: [0.0; 3],
                        area: 0.5 * h * h,
                    });
                }
            }
        }

        // Fracture elements, keyed by vertex pair.
        let mut fracture_nodes = Vec::new();
        let mut fracture_edges = Vec::new();
        let mut segment_nodes = Vec::with_capacity(segment_vertices.len());
        let mut segment_edges = Vec::with_capacity(segment_vertices.len());
        let mut trace_lookup: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (s, verts) in segment_vertices.iter().enumerate() {
            let first = fracture_nodes.len();
            for (k, &v) in verts.iter().enumerate() {
                let end = if k == 0 {
                    Some(SegmentEnd::Start)
                } else if k + 1 == verts.len() {
                    Some(SegmentEnd::End)
                } else {
                    None
                };
                fracture_nodes.push(FractureNode { vertex: v, segment: s, end });
            }
            segment_nodes.push((first..fracture_nodes.len()).collect());
            let mut edges_here = Vec::with_capacity(verts.len() - 1);
            for k in 0..verts.len() - 1 {
                let (a, b) = (verts[k], verts[k + 1]);
                let id = fracture_edges.len();
                if trace_lookup.insert((a.min(b), a.max(b)), id).is_some() {
                    return Err(Error::Mesh(format!("fracture segments overlap at vertices {a}, {b}")));
                }
                fracture_edges.push(FractureEdge {
                    segment: s,
                    vertices: [a, b],
                    nodes: [first + k, first + k + 1],
                    sides: [usize::MAX; 2],
                    length: h,
                });
                edges_here.push(id);
            }
            segment_edges.push(edges_here);
        }

        // Subdomain-local edges: the same vertex pair on a fracture yields two DOFs.
        let mut edge_map: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
        let mut edges: Vec<MeshEdge> = Vec::with_capacity(3 * nx * ny + nx + ny);
        let mut incident: Vec<Vec<usize>> = Vec::with_capacity(3 * nx * ny + nx + ny);
        for (t, tri) in triangles.iter_mut().enumerate() {
            for k in 0..3 {
                let a = tri.vertices[(k + 1) % 3];
                let b = tri.vertices[(k + 2) % 3];
                let key = (a.min(b), a.max(b), tri.subdomain);
                let id = *edge_map.entry(key).or_insert_with(|| {
                    let (lo, hi) = (key.0, key.1);
                    let (normal, length) = outward_normal(vertices[lo], vertices[hi]);
                    edges.push(MeshEdge {
                        vertices: [lo, hi],
                        kind: EdgeKind::Boundary { triangle: t },
                        normal,
                        length,
                        subdomain: tri.subdomain,
                    });
                    incident.push(Vec::with_capacity(2));
                    edges.len() - 1
                });
                incident[id].push(t);
                tri.edges[k] = id;
            }
        }

        let tol = geometry.tolerance();
        for (id, edge) in edges.iter_mut().enumerate() {
            match incident[id].as_slice() {
                &[t0, t1] => edge.kind = EdgeKind::Interior { triangles: [t0, t1] },
                &[t] => {
                    let (pa, pb) = (vertices[edge.vertices[0]], vertices[edge.vertices[1]]);
                    let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                    if domain.on_boundary(mid, tol) {
                        edge.kind = EdgeKind::Boundary { triangle: t };
                    } else if let Some(&fe) = trace_lookup.get(&(edge.vertices[0], edge.vertices[1])) {
                        let seg = &geometry.segments[fracture_edges[fe].segment];
                        let n = seg.normal();
                        let c = centroid(&vertices, &triangles[t]);
                        let side = if (c[0] - mid[0]) * n[0] + (c[1] - mid[1]) * n[1] < 0.0 { 0 } else { 1 };
                        if fracture_edges[fe].sides[side] != usize::MAX {
                            return Err(Error::Mesh(format!("fracture edge {fe} has two traces on side {side}")));
                        }
                        fracture_edges[fe].sides[side] = id;
                        // Outward normal of the owning triangle.
                        edge.normal = if side == 0 { n } else { [-n[0], -n[1]] };
                        edge.kind = EdgeKind::Fracture { triangle: t, fracture_edge: fe, side };
                    } else {
                        return Err(Error::Mesh(format!("edge {id} separates subdomains without a fracture")));
                    }
                }
                other => {
                    return Err(Error::Mesh(format!("edge {id} has {} incident triangles", other.len())));
                }
            }
        }
        if let Some(fe) = fracture_edges.iter().position(|e| e.sides.contains(&usize::MAX)) {
            return Err(Error::Mesh(format!("fracture edge {fe} is missing a trace")));
        }

        for tri in triangles.iter_mut() {
            for k in 0..3 {
                let a = vertices[tri.vertices[(k + 1) % 3]];
                let b = vertices[tri.vertices[(k + 2) % 3]];
                let (out, _) = outward_normal(a, b);
                let n = edges[tri.edges[k]].normal;
                tri.signs[k] = if out[0] * n[0] + out[1] * n[1] > 0.0 { 1.0 } else { -1.0 };
            }
        }

        Ok(Self {
            geometry: geometry.clone(),
            h,
            nx,
            ny,
            vertices,
            triangles,
            edges,
            fracture_edges,
            fracture_nodes,
            segment_nodes,
            segment_edges,
        })
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        centroid(&self.vertices, &self.triangles[t])
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        let v = self.triangles[t].vertices;
        [self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    pub fn n_subdomains(&self) -> usize {
        self.geometry.subdomains.len()
    }

    /// Vertex pairs of the trace edges that the side-`side` subdomain mesh
    /// induces on `segment`.
    pub fn trace_edges(&self, segment: usize, side: usize) -> BTreeSet<(usize, usize)> {
        self.edges
            .iter()
            .filter_map(|e| match e.kind {
                EdgeKind::Fracture { fracture_edge, side: s, .. }
                    if s == side && self.fracture_edges[fracture_edge].segment == segment =>
                {
                    Some((e.vertices[0], e.vertices[1]))
                }
                _ => None,
            })
            .collect()
    }

    /// Fracture flux nodes meeting at each intersection, with the end of the
    /// incident segment they close.
    pub fn intersection_nodes(&self) -> Vec<Vec<(usize, SegmentEnd)>> {
        self.geometry
            .intersections
            .iter()
            .map(|x| {
                x.segments
                    .iter()
                    .map(|&(s, end)| {
                        let nodes = &self.segment_nodes[s];
                        let node = match end {
                            SegmentEnd::Start => nodes[0],
                            SegmentEnd::End => nodes[nodes.len() - 1],
                        };
                        (node, end)
                    })
                    .collect()
            })
            .collect()
    }

    pub fn triangles_per_subdomain(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_subdomains()];
        for t in &self.triangles {
            counts[t.subdomain] += 1;
        }
        counts
    }
}

fn centroid(vertices: &[[f64; 2]], tri: &Triangle) -> [f64; 2] {
    let [a, b, c] = tri.vertices.map(|v| vertices[v]);
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}
