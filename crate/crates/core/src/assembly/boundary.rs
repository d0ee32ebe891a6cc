use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{Rect, SegmentEnd};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wall {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    /// Prescribed pressure.
    Pressure(f64),
    /// Zero normal flux.
    NoFlow,
}

/// Condition on the part of `wall` whose tangential coordinate lies in `[from, to]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallPatch {
    pub wall: Wall,
    pub from: f64,
    pub to: f64,
    pub condition: Condition,
}

/// Condition at an end of a fracture that touches the outer boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractureEndCondition {
    pub fracture: usize,
    pub end: SegmentEnd,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditions {
    pub default_wall: Condition,
    pub patches: Vec<WallPatch>,
    pub default_fracture_end: Condition,
    pub fracture_ends: Vec<FractureEndCondition>,
}

impl Default for BoundaryConditions {
    fn default() -> Self {
        Self::homogeneous()
    }
}

impl BoundaryConditions {
    /// Zero pressure on every wall and fracture end.
    pub fn homogeneous() -> Self {
        Self {
            default_wall: Condition::Pressure(0.0),
            patches: Vec::new(),
            default_fracture_end: Condition::Pressure(0.0),
            fracture_ends: Vec::new(),
        }
    }

    /// No-flow walls and fracture ends.
    pub fn sealed() -> Self {
        Self {
            default_wall: Condition::NoFlow,
            patches: Vec::new(),
            default_fracture_end: Condition::NoFlow,
            fracture_ends: Vec::new(),
        }
    }

    pub fn with_patch(mut self, wall: Wall, from: f64, to: f64, condition: Condition) -> Self {
        self.patches.push(WallPatch { wall, from, to, condition });
        self
    }

    pub fn with_fracture_end(mut self, fracture: usize, end: SegmentEnd, condition: Condition) -> Self {
        self.fracture_ends.push(FractureEndCondition { fracture, end, condition });
        self
    }

    /// Condition at boundary point `p` (an edge midpoint). Overlapping
    /// patches with different conditions are an error.
    pub fn wall_condition(&self, domain: &Rect, p: [f64; 2], tol: f64) -> Result<Condition> {
        let wall_of = |w: Wall| match w {
            Wall::Left => (p[0] - domain.x_min).abs() <= tol,
            Wall::Right => (p[0] - domain.x_max).abs() <= tol,
            Wall::Bottom => (p[1] - domain.y_min).abs() <= tol,
            Wall::Top => (p[1] - domain.y_max).abs() <= tol,
        };
        let mut found: Option<Condition> = None;
        for patch in &self.patches {
            if !(patch.from < patch.to) {
                return Err(Error::Boundary(format!("empty patch {patch:?}")));
            }
            let s = match patch.wall {
                Wall::Left | Wall::Right => p[1],
                Wall::Bottom | Wall::Top => p[0],
            };
            if wall_of(patch.wall) && s >= patch.from - tol && s <= patch.to + tol {
                match found {
                    Some(c) if c != patch.condition => {
                        return Err(Error::Boundary(format!(
                            "boundary point ({}, {}) is assigned both {c:?} and {:?}",
                            p[0], p[1], patch.condition
                        )));
                    }
                    _ => found = Some(patch.condition),
                }
            }
        }
        Ok(found.unwrap_or(self.default_wall))
    }

    pub fn fracture_end_condition(&self, fracture: usize, end: SegmentEnd) -> Result<Condition> {
        let mut found: Option<Condition> = None;
        for fe in self.fracture_ends.iter().filter(|fe| fe.fracture == fracture && fe.end == end) {
            match found {
                Some(c) if c != fe.condition => {
                    return Err(Error::Boundary(format!(
                        "end {end:?} of fracture {fracture} is assigned both {c:?} and {:?}",
                        fe.condition
                    )));
                }
                _ => found = Some(fe.condition),
            }
        }
        Ok(found.unwrap_or(self.default_fracture_end))
    }
}
