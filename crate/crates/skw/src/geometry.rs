//! Domains, the rotated lattice embedding, and exit-point projection.
//!
//! A walk lives on the integer lattice; its sites are carried into the plane
//! by z = delta * R_alpha * (i, j). The domain boundary is treated as outside:
//! `contains` is the strict interior. Exits are projected orthogonally onto
//! the boundary and reduced to a single parameter theta in [0, 2*pi).

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Lattice site in integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Site {
    pub i: i32,
    pub j: i32,
}

impl Site {
    pub const ORIGIN: Site = Site { i: 0, j: 0 };

    pub fn new(i: i32, j: i32) -> Self {
        Site { i, j }
    }

    pub fn offset(self, di: i32, dj: i32) -> Self {
        Site {
            i: self.i + di,
            j: self.j + dj,
        }
    }
}

impl std::hash::Hash for Site {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        // One 64-bit write keeps the hot hash-set lookups to a single round.
        state.write_u64(((self.i as u32 as u64) << 32) | (self.j as u32 as u64));
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("lattice spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("projection expects a point outside the domain, got ({x}, {y}) inside")]
    PointInside { x: f64, y: f64 },
    #[error("projection from the disk center is undefined")]
    DegenerateProjection,
}

/// Open disk; the origin (walk start) must lie strictly inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskDomain {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
}

impl DiskDomain {
    pub fn new(center_x: f64, center_y: f64, radius: f64) -> Result<Self, GeometryError> {
        let d = DiskDomain {
            center_x,
            center_y,
            radius,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(GeometryError::InvalidDomain(format!(
                "disk radius {} must be positive",
                self.radius
            )));
        }
        if !self.center_x.is_finite() || !self.center_y.is_finite() {
            return Err(GeometryError::InvalidDomain(
                "disk center must be finite".into(),
            ));
        }
        if self.center_x.hypot(self.center_y) >= self.radius {
            return Err(GeometryError::InvalidDomain(
                "walk origin (0, 0) must lie strictly inside the disk".into(),
            ));
        }
        Ok(())
    }
}

/// Open horizontal strip bottom < y < top with bottom < 0 < top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripDomain {
    pub top: f64,
    pub bottom: f64,
}

impl StripDomain {
    pub fn new(top: f64, bottom: f64) -> Result<Self, GeometryError> {
        let s = StripDomain { top, bottom };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.top.is_finite() || !self.bottom.is_finite() {
            return Err(GeometryError::InvalidDomain("strip edges must be finite".into()));
        }
        if !(self.bottom < 0.0 && 0.0 < self.top) {
            return Err(GeometryError::InvalidDomain(format!(
                "strip must satisfy bottom < 0 < top, got bottom={} top={}",
                self.bottom, self.top
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.top - self.bottom
    }
}

/// Boundary component of a strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripSide {
    Top,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Disk(DiskDomain),
    Strip(StripDomain),
}

impl Domain {
    pub fn validate(&self) -> Result<(), GeometryError> {
        match self {
            Domain::Disk(d) => d.validate(),
            Domain::Strip(s) => s.validate(),
        }
    }

    /// Strict interior: boundary points count as outside.
    pub fn contains(&self, p: Point) -> bool {
        match self {
            Domain::Disk(d) => {
                let dx = p.x - d.center_x;
                let dy = p.y - d.center_y;
                dx * dx + dy * dy < d.radius * d.radius
            }
            Domain::Strip(s) => s.bottom < p.y && p.y < s.top,
        }
    }

    /// Distance from an interior point to the boundary (negative outside).
    pub fn interior_depth(&self, p: Point) -> f64 {
        match self {
            Domain::Disk(d) => d.radius - (p.x - d.center_x).hypot(p.y - d.center_y),
            Domain::Strip(s) => (s.top - p.y).min(p.y - s.bottom),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Domain::Disk(d) => format!(
                "disk(center=({}, {}), radius={})",
                d.center_x, d.center_y, d.radius
            ),
            Domain::Strip(s) => format!("strip(top={}, bottom={})", s.top, s.bottom),
        }
    }
}

/// Rotated, scaled embedding of the integer lattice into the plane.
#[derive(Debug, Clone, Copy)]
pub struct LatticeEmbedding {
    pub delta: f64,
    pub alpha: f64,
    cos_a: f64,
    sin_a: f64,
}

impl LatticeEmbedding {
    pub fn new(delta: f64, alpha: f64) -> Result<Self, GeometryError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(GeometryError::BadSpacing(delta));
        }
        Ok(LatticeEmbedding {
            delta,
            alpha,
            cos_a: alpha.cos(),
            sin_a: alpha.sin(),
        })
    }

    /// z = delta * R_alpha * (i, j).
    pub fn lattice_to_plane(&self, site: Site) -> Point {
        let (i, j) = (site.i as f64, site.j as f64);
        Point {
            x: self.delta * (self.cos_a * i - self.sin_a * j),
            y: self.delta * (self.sin_a * i + self.cos_a * j),
        }
    }
}

/// Rotation angle from one uniform deviate: alpha = 2*pi*u.
pub fn sample_rotation(u: f64) -> f64 {
    TAU * u
}

/// Where a walk left the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitRecord {
    /// First walk point outside the domain (continuum coordinates).
    pub outside_point: Point,
    /// Orthogonal projection of `outside_point` onto the boundary.
    pub boundary_point: Point,
    /// Boundary parameter of `boundary_point` in [0, 2*pi).
    pub theta: f64,
}

/// Project an exterior point orthogonally onto the boundary and parametrize it.
///
/// Disk: radial projection; theta is the polar angle about the disk center.
/// Strip: vertical projection onto the violated side; theta is the conformal
/// image angle of that boundary point, so that harmonic measure is uniform
/// in theta.
pub fn project(domain: &Domain, p: Point) -> Result<(Point, f64), GeometryError> {
    if domain.contains(p) {
        return Err(GeometryError::PointInside { x: p.x, y: p.y });
    }
    match domain {
        Domain::Disk(d) => {
            let dx = p.x - d.center_x;
            let dy = p.y - d.center_y;
            let norm = dx.hypot(dy);
            if norm == 0.0 {
                return Err(GeometryError::DegenerateProjection);
            }
            let b = Point {
                x: d.center_x + d.radius * dx / norm,
                y: d.center_y + d.radius * dy / norm,
            };
            let theta = dy.atan2(dx).rem_euclid(TAU);
            Ok((b, theta))
        }
        Domain::Strip(s) => {
            let side = if p.y >= s.top {
                StripSide::Top
            } else {
                StripSide::Bottom
            };
            let b = Point {
                x: p.x,
                y: match side {
                    StripSide::Top => s.top,
                    StripSide::Bottom => s.bottom,
                },
            };
            let theta = crate::harmonic::strip_parameter(s, side, p.x);
            Ok((b, theta))
        }
    }
}
