//! Fractured rectangular domains.
//!
//! Fractures are axis-aligned segments whose endpoints lie on the domain
//! boundary or on another fracture. Fractures are split into segments at
//! every point where they meet another fracture; those points become
//! intersections carrying the pressure/flux coupling conditions.

mod mesh;

pub use mesh::{generate_mesh, EdgeKind, FractureEdge, FractureNode, MeshEdge, Triangle, TriangularMesh};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Coordinates closer than this (relative to the domain diameter) are identified.
pub(crate) const GEOMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self { x_min, x_max, y_min, y_max }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diameter(&self) -> f64 {
        libm::hypot(self.width(), self.height())
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        p[0] >= self.x_min - tol && p[0] <= self.x_max + tol && p[1] >= self.y_min - tol && p[1] <= self.y_max + tol
    }

    pub fn on_boundary(&self, p: [f64; 2], tol: f64) -> bool {
        self.contains(p, tol)
            && ((p[0] - self.x_min).abs() <= tol
                || (p[0] - self.x_max).abs() <= tol
                || (p[1] - self.y_min).abs() <= tol
                || (p[1] - self.y_max).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// A straight fracture trace. `position` is the fixed coordinate (x for a
/// vertical fracture, y for a horizontal one); `start < end` span the other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractureLine {
    pub orientation: Orientation,
    pub position: f64,
    pub start: f64,
    pub end: f64,
    pub width: f64,
}

impl FractureLine {
    pub fn vertical(x: f64, y_start: f64, y_end: f64, width: f64) -> Self {
        Self { orientation: Orientation::Vertical, position: x, start: y_start, end: y_end, width }
    }

    pub fn horizontal(y: f64, x_start: f64, x_end: f64, width: f64) -> Self {
        Self { orientation: Orientation::Horizontal, position: y, start: x_start, end: x_end, width }
    }

    pub fn point_at(&self, s: f64) -> [f64; 2] {
        match self.orientation {
            Orientation::Vertical => [self.position, s],
            Orientation::Horizontal => [s, self.position],
        }
    }

    /// Tangential coordinate of `p` if it lies on the trace (within `tol`).
    fn locate(&self, p: [f64; 2], tol: f64) -> Option<f64> {
        let (fixed, s) = match self.orientation {
            Orientation::Vertical => (p[0], p[1]),
            Orientation::Horizontal => (p[1], p[0]),
        };
        ((fixed - self.position).abs() <= tol && s >= self.start - tol && s <= self.end + tol).then_some(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SegmentEnd {
    Start,
    End,
}

/// Piece of a fracture between two consecutive junction or boundary points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractureSegment {
    pub fracture: usize,
    pub orientation: Orientation,
    pub position: f64,
    pub start: f64,
    pub end: f64,
}

impl FractureSegment {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn point_at(&self, s: f64) -> [f64; 2] {
        match self.orientation {
            Orientation::Vertical => [self.position, s],
            Orientation::Horizontal => [s, self.position],
        }
    }

    pub fn endpoint(&self, end: SegmentEnd) -> [f64; 2] {
        match end {
            SegmentEnd::Start => self.point_at(self.start),
            SegmentEnd::End => self.point_at(self.end),
        }
    }

    /// Unit tangent (direction of increasing coordinate).
    pub fn tangent(&self) -> [f64; 2] {
        match self.orientation {
            Orientation::Vertical => [0.0, 1.0],
            Orientation::Horizontal => [1.0, 0.0],
        }
    }

    /// Fixed normal `n = n_1 = -n_2`; side 0 lies on the `-n` side.
    pub fn normal(&self) -> [f64; 2] {
        match self.orientation {
            Orientation::Vertical => [1.0, 0.0],
            Orientation::Horizontal => [0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub point: [f64; 2],
    pub segments: Vec<(usize, SegmentEnd)>,
}

/// Fracture configuration of one of the reference experiments.
#[derive(Debug, Clone, PartialEq)]
pub enum CaseSpec {
    /// One vertical fracture at `x` spanning the full height.
    Single { domain: Rect, x: f64, width: f64 },
    /// Two vertical fractures spanning the full height.
    Parallel { domain: Rect, xs: [f64; 2], widths: [f64; 2] },
    /// A horizontal fracture at `y` (width `widths[0]`) crossing a vertical one
    /// at `x` (width `widths[1]`), both spanning the domain.
    Intersecting { domain: Rect, x: f64, y: f64, widths: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractureGeometry {
    pub domain: Rect,
    pub fractures: Vec<FractureLine>,
    pub segments: Vec<FractureSegment>,
    pub subdomains: Vec<Rect>,
    pub intersections: Vec<Intersection>,
}

pub fn build_geometry(spec: &CaseSpec) -> Result<FractureGeometry> {
    match *spec {
        CaseSpec::Single { domain, x, width } => {
            FractureGeometry::new(domain, vec![FractureLine::vertical(x, domain.y_min, domain.y_max, width)])
        }
        CaseSpec::Parallel { domain, xs, widths } => FractureGeometry::new(
            domain,
            vec![
                FractureLine::vertical(xs[0], domain.y_min, domain.y_max, widths[0]),
                FractureLine::vertical(xs[1], domain.y_min, domain.y_max, widths[1]),
            ],
        ),
        CaseSpec::Intersecting { domain, x, y, widths } => FractureGeometry::new(
            domain,
            vec![
                FractureLine::horizontal(y, domain.x_min, domain.x_max, widths[0]),
                FractureLine::vertical(x, domain.y_min, domain.y_max, widths[1]),
            ],
        ),
    }
}

impl FractureGeometry {
    pub fn new(domain: Rect, fractures: Vec<FractureLine>) -> Result<Self> {
        if !(domain.width() > 0.0 && domain.height() > 0.0) || !domain.area().is_finite() {
            return Err(Error::Geometry(format!("degenerate domain {domain:?}")));
        }
        let tol = GEOMETRY_TOLERANCE * domain.diameter();
        for (k, f) in fractures.iter().enumerate() {
            validate_fracture(k, f, &domain, tol)?;
        }
        for a in 0..fractures.len() {
            for b in a + 1..fractures.len() {
                let (fa, fb) = (&fractures[a], &fractures[b]);
                if fa.orientation == fb.orientation
                    && (fa.position - fb.position).abs() <= tol
                    && fa.start < fb.end - tol
                    && fb.start < fa.end - tol
                {
                    return Err(Error::Geometry(format!("fractures {a} and {b} overlap")));
                }
            }
        }

        // Endpoints must sit on the boundary or on another fracture.
        for (k, f) in fractures.iter().enumerate() {
            for s in [f.start, f.end] {
                let p = f.point_at(s);
                let supported = domain.on_boundary(p, tol)
                    || fractures.iter().enumerate().any(|(j, g)| j != k && g.locate(p, tol).is_some());
                if !supported {
                    return Err(Error::Geometry(format!(
                        "fracture {k} ends at ({}, {}) which is neither on the boundary nor on another fracture",
                        p[0], p[1]
                    )));
                }
            }
        }

        let segments = split_segments(&fractures, tol);
        let intersections = find_intersections(&segments, &domain, tol);
        let subdomains = find_subdomains(&domain, &fractures, tol)?;
        let geometry = Self { domain, fractures, segments, subdomains, intersections };

        for (k, seg) in geometry.segments.iter().enumerate() {
            let mid = seg.point_at(0.5 * (seg.start + seg.end));
            let n = seg.normal();
            let off = 1e3 * tol;
            let minus = geometry.subdomain_at([mid[0] - off * n[0], mid[1] - off * n[1]]);
            let plus = geometry.subdomain_at([mid[0] + off * n[0], mid[1] + off * n[1]]);
            match (minus, plus) {
                (Some(a), Some(b)) if a != b => {}
                _ => {
                    return Err(Error::Geometry(format!("segment {k} does not separate two subdomains")));
                }
            }
        }
        Ok(geometry)
    }

    /// Index of the subdomain containing `p` (interior points only).
    pub fn subdomain_at(&self, p: [f64; 2]) -> Option<usize> {
        self.subdomains.iter().position(|r| p[0] > r.x_min && p[0] < r.x_max && p[1] > r.y_min && p[1] < r.y_max)
    }

    pub fn widths(&self) -> Vec<f64> {
        self.fractures.iter().map(|f| f.width).collect()
    }

    /// Same geometry with different fracture widths.
    pub fn with_widths(&self, widths: &[f64]) -> Result<Self> {
        if widths.len() != self.fractures.len() {
            return Err(Error::Dimension { expected: self.fractures.len(), found: widths.len() });
        }
        let mut g = self.clone();
        let tol = GEOMETRY_TOLERANCE * g.domain.diameter();
        for (k, (f, &w)) in g.fractures.iter_mut().zip(widths).enumerate() {
            f.width = w;
            validate_fracture(k, f, &self.domain, tol)?;
        }
        Ok(g)
    }

    pub(crate) fn tolerance(&self) -> f64 {
        GEOMETRY_TOLERANCE * self.domain.diameter()
    }
}

fn validate_fracture(k: usize, f: &FractureLine, domain: &Rect, tol: f64) -> Result<()> {
    if !(f.width > 0.0) || !f.width.is_finite() {
        return Err(Error::Geometry(format!("fracture {k} has non-positive width {}", f.width)));
    }
    if f.width >= 0.05 * domain.diameter() {
        return Err(Error::Geometry(format!("fracture {k} width {} is not small compared with the domain", f.width)));
    }
    if !(f.end - f.start > tol) {
        return Err(Error::Geometry(format!("fracture {k} has empty extent")));
    }
    let p0 = f.point_at(f.start);
    let p1 = f.point_at(f.end);
    if !domain.contains(p0, tol) || !domain.contains(p1, tol) {
        return Err(Error::Geometry(format!("fracture {k} leaves the domain")));
    }
    let (lo, hi) = match f.orientation {
        Orientation::Vertical => (domain.x_min, domain.x_max),
        Orientation::Horizontal => (domain.y_min, domain.y_max),
    };
    if f.position <= lo + tol || f.position >= hi - tol {
        return Err(Error::Geometry(format!("fracture {k} lies on the domain boundary")));
    }
    Ok(())
}

fn split_segments(fractures: &[FractureLine], tol: f64) -> Vec<FractureSegment> {
    let mut segments = Vec::new();
    for (k, f) in fractures.iter().enumerate() {
        let mut cuts = vec![f.start, f.end];
        for (j, g) in fractures.iter().enumerate() {
            if j == k || g.orientation == f.orientation {
                continue;
            }
            // Crossing or touching point of the two traces.
            let p = f.point_at(g.position);
            if let (Some(s), Some(_)) = (f.locate(p, tol), g.locate(p, tol)) {
                cuts.push(s);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() <= tol);
        for w in cuts.windows(2) {
            segments.push(FractureSegment {
                fracture: k,
                orientation: f.orientation,
                position: f.position,
                start: w[0],
                end: w[1],
            });
        }
    }
    segments
}

fn find_intersections(segments: &[FractureSegment], domain: &Rect, tol: f64) -> Vec<Intersection> {
    let mut found: Vec<Intersection> = Vec::new();
    for (k, seg) in segments.iter().enumerate() {
        for end in [SegmentEnd::Start, SegmentEnd::End] {
            let p = seg.endpoint(end);
            if domain.on_boundary(p, tol) {
                continue;
            }
            match found.iter_mut().find(|i| (i.point[0] - p[0]).abs() <= tol && (i.point[1] - p[1]).abs() <= tol) {
                Some(i) => i.segments.push((k, end)),
                None => found.push(Intersection { point: p, segments: vec![(k, end)] }),
            }
        }
    }
    found
}

/// Partitions the domain into the rectangles cut out by the fracture traces.
fn find_subdomains(domain: &Rect, fractures: &[FractureLine], tol: f64) -> Result<Vec<Rect>> {
    let mut xs = vec![domain.x_min, domain.x_max];
    let mut ys = vec![domain.y_min, domain.y_max];
    for f in fractures {
        match f.orientation {
            Orientation::Vertical => {
                xs.push(f.position);
                ys.extend([f.start, f.end]);
            }
            Orientation::Horizontal => {
                ys.push(f.position);
                xs.extend([f.start, f.end]);
            }
        }
    }
    for v in [&mut xs, &mut ys] {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup_by(|a, b| (*a - *b).abs() <= tol);
    }
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let blocked = |orientation: Orientation, position: f64, lo: f64, hi: f64| {
        fractures.iter().any(|f| {
            f.orientation == orientation
                && (f.position - position).abs() <= tol
                && f.start <= lo + tol
                && f.end >= hi - tol
        })
    };
    let mut label = vec![usize::MAX; nx * ny];
    let mut n_regions = 0;
    for seed in 0..nx * ny {
        if label[seed] != usize::MAX {
            continue;
        }
        let mut stack = vec![seed];
        label[seed] = n_regions;
        while let Some(c) = stack.pop() {
            let (i, j) = (c % nx, c / nx);
            let mut visit = |n: usize, stack: &mut Vec<usize>| {
                if label[n] == usize::MAX {
                    label[n] = n_regions;
                    stack.push(n);
                }
            };
            if i + 1 < nx && !blocked(Orientation::Vertical, xs[i + 1], ys[j], ys[j + 1]) {
                visit(c + 1, &mut stack);
            }
            if i > 0 && !blocked(Orientation::Vertical, xs[i], ys[j], ys[j + 1]) {
                visit(c - 1, &mut stack);
            }
            if j + 1 < ny && !blocked(Orientation::Horizontal, ys[j + 1], xs[i], xs[i + 1]) {
                visit(c + nx, &mut stack);
            }
            if j > 0 && !blocked(Orientation::Horizontal, ys[j], xs[i], xs[i + 1]) {
                visit(c - nx, &mut stack);
            }
        }
        n_regions += 1;
    }
    let mut boxes: BTreeMap<usize, (Rect, f64)> = BTreeMap::new();
    for c in 0..nx * ny {
        let (i, j) = (c % nx, c / nx);
        let cell = Rect::new(xs[i], xs[i + 1], ys[j], ys[j + 1]);
        let entry = boxes.entry(label[c]).or_insert((cell, 0.0));
        entry.0.x_min = entry.0.x_min.min(cell.x_min);
        entry.0.x_max = entry.0.x_max.max(cell.x_max);
        entry.0.y_min = entry.0.y_min.min(cell.y_min);
        entry.0.y_max = entry.0.y_max.max(cell.y_max);
        entry.1 += cell.area();
    }
    let mut out = Vec::with_capacity(boxes.len());
    for (r, (bbox, area)) in boxes {
        if (bbox.area() - area).abs() > 1e-9 * domain.area() {
            return Err(Error::Geometry(format!("subdomain {r} is not a rectangle")));
        }
        out.push(bbox);
    }
    Ok(out)
}
