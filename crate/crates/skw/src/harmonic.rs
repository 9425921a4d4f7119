//! Harmonic measure of the domains, seen from the walk origin, via explicit
//! conformal maps onto the unit disk.
//!
//! Disk domain: normalize w = (z - c)/r, then apply the disk automorphism
//! phi(w) = (w - w0) / (1 - conj(w0) w) with w0 = -c/r, which sends the
//! origin's image to 0. Harmonic measure of a boundary arc is its image's
//! arc length over 2*pi.
//!
//! Strip domain {bottom < Im z < top}: shift and scale zeta = pi (z - i b)/w
//! onto the standard strip {0 < Im < pi}, exponentiate u = e^zeta onto the
//! upper half-plane, then send u0 = e^{i pi (-b)/w} (the origin's image) to 0
//! with the half-plane Moebius map T(u) = (u - u0) / (u - conj(u0)).
//! The boundary parameter theta is the image angle itself, so the harmonic
//! CDF is exactly theta / 2*pi.

use crate::geometry::{Domain, Point, StripDomain, StripSide};
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Slack for closed-domain membership checks in `map_point`.
const CLOSURE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("domain is invalid: {0}")]
    InvalidDomain(String),
    #[error("point ({x}, {y}) lies outside the closed domain")]
    OutsideClosure { x: f64, y: f64 },
    #[error("theta = {0} outside [0, 2*pi]")]
    ThetaOutOfRange(f64),
}

#[derive(Debug, Clone, Copy)]
enum MapKind {
    Disk {
        center: Complex64,
        radius: f64,
        /// Image of the walk origin after normalization: w0 = -c/r.
        w0: Complex64,
        /// Image angle of the theta = 0 boundary point.
        psi0: f64,
    },
    Strip {
        bottom: f64,
        width: f64,
        /// e^{i alpha0} with alpha0 = pi * (-bottom) / width: the half-plane
        /// image of the walk origin.
        u0: Complex64,
    },
}

/// Conformal map from a domain onto the unit disk taking the walk origin to 0.
#[derive(Debug, Clone, Copy)]
pub struct ConformalMap {
    kind: MapKind,
}

impl ConformalMap {
    pub fn new(domain: &Domain) -> Result<Self, MapError> {
        domain
            .validate()
            .map_err(|e| MapError::InvalidDomain(e.to_string()))?;
        let kind = match domain {
            Domain::Disk(d) => {
                let center = Complex64::new(d.center_x, d.center_y);
                let w0 = -center / d.radius;
                let psi0 = moebius_disk(Complex64::new(1.0, 0.0), w0).arg();
                MapKind::Disk {
                    center,
                    radius: d.radius,
                    w0,
                    psi0,
                }
            }
            Domain::Strip(s) => {
                let width = s.width();
                let alpha0 = PI * (-s.bottom) / width;
                MapKind::Strip {
                    bottom: s.bottom,
                    width,
                    u0: Complex64::from_polar(1.0, alpha0),
                }
            }
        };
        Ok(ConformalMap { kind })
    }

    /// Image of a point of the closed domain; interior maps strictly inside
    /// the unit circle, boundary onto it.
    pub fn map_point(&self, p: Point) -> Result<Complex64, MapError> {
        match self.kind {
            MapKind::Disk { center, radius, w0, .. } => {
                let w = (Complex64::new(p.x, p.y) - center) / radius;
                if w.norm() > 1.0 + CLOSURE_TOL {
                    return Err(MapError::OutsideClosure { x: p.x, y: p.y });
                }
                Ok(moebius_disk(w, w0))
            }
            MapKind::Strip { bottom, width, u0, .. } => {
                let top = bottom + width;
                if p.y < bottom - CLOSURE_TOL * width || p.y > top + CLOSURE_TOL * width {
                    return Err(MapError::OutsideClosure { x: p.x, y: p.y });
                }
                let zeta = Complex64::new(PI * p.x / width, PI * (p.y - bottom) / width);
                // For Re zeta > 0 evaluate T(e^zeta) as (1 - u0 e^-zeta) /
                // (1 - conj(u0) e^-zeta): same map, no overflow for large x.
                if zeta.re > 0.0 {
                    let inv = (-zeta).exp();
                    Ok((1.0 - u0 * inv) / (1.0 - u0.conj() * inv))
                } else {
                    let u = zeta.exp();
                    Ok((u - u0) / (u - u0.conj()))
                }
            }
        }
    }

    /// Harmonic measure, seen from the origin, of the boundary arc from
    /// parameter 0 to theta. Monotone, H(0) = 0, H(2*pi) = 1.
    pub fn harmonic_cdf(&self, theta: f64) -> Result<f64, MapError> {
        if !(0.0..=TAU + 1e-12).contains(&theta) {
            return Err(MapError::ThetaOutOfRange(theta));
        }
        if theta >= TAU {
            return Ok(1.0);
        }
        match self.kind {
            MapKind::Disk { w0, psi0, .. } => {
                let w = Complex64::from_polar(1.0, theta);
                let psi = moebius_disk(w, w0).arg();
                // The image angle advances by exactly 2*pi over one boundary
                // loop, so the wrapped difference is the arc length.
                Ok(((psi - psi0).rem_euclid(TAU) / TAU).min(1.0))
            }
            MapKind::Strip { .. } => Ok(theta / TAU),
        }
    }

    /// Boundary parameter distributed exactly by harmonic measure, from one
    /// uniform deviate. Inverse of `harmonic_cdf`.
    pub fn sample_boundary_parameter(&self, u: f64) -> f64 {
        match self.kind {
            MapKind::Disk { w0, psi0, .. } => {
                let target = Complex64::from_polar(1.0, psi0 + TAU * u);
                // Inverse of the disk automorphism: w = (v + w0)/(1 + conj(w0) v).
                let w = (target + w0) / (1.0 + w0.conj() * target);
                w.arg().rem_euclid(TAU)
            }
            MapKind::Strip { .. } => TAU * u,
        }
    }
}

/// Disk automorphism sending w0 to 0.
fn moebius_disk(w: Complex64, w0: Complex64) -> Complex64 {
    (w - w0) / (1.0 - w0.conj() * w)
}

/// Image of a point of the closed domain under the domain's conformal map.
pub fn map_point(domain: &Domain, p: Point) -> Result<Complex64, MapError> {
    ConformalMap::new(domain)?.map_point(p)
}

/// Harmonic CDF at boundary parameter theta, seen from the walk origin.
pub fn harmonic_cdf(domain: &Domain, theta: f64) -> Result<f64, MapError> {
    ConformalMap::new(domain)?.harmonic_cdf(theta)
}

/// Conformal-angle parameter of a strip boundary point (side, x).
///
/// With u = +-e^{pi x / w} the half-plane image of the boundary point, the
/// image on the circle is T(u) = (u - u0)/(u - conj(u0)), whose argument
/// reduces to 2 atan2(-sin alpha0, u - cos alpha0). The two sides partition
/// the circle: the top covers (0, 2 alpha0) decreasing in x, the bottom
/// covers (2 alpha0, 2*pi) increasing in x, and the strip's far ends pinch to
/// the single parameters 2 alpha0 (left) and 0 == 2*pi (right).
///
/// Returns a value in [0, 2*pi], closed: a dozen or so widths out the
/// parameter is within rounding of a pinch point and saturates exactly, so
/// the top can return 0.0 and 2 alpha0, and the bottom 2 alpha0 and 2*pi.
pub fn strip_parameter(strip: &StripDomain, side: StripSide, x: f64) -> f64 {
    let width = strip.width();
    let alpha0 = PI * (-strip.bottom) / width;
    let exponent = PI * x / width;
    let sign = match side {
        StripSide::Top => -1.0,
        StripSide::Bottom => 1.0,
    };
    // For x > 0 rescale the atan2 frame by e^{-exponent} so the exponential
    // never overflows; atan2 is invariant under positive scaling.
    let half = if exponent > 0.0 {
        let shrink = (-exponent).exp();
        (-alpha0.sin() * shrink).atan2(sign - alpha0.cos() * shrink)
    } else {
        (-alpha0.sin()).atan2(sign * exponent.exp() - alpha0.cos())
    };
    let theta = (2.0 * half).rem_euclid(TAU);
    // rem_euclid can yield -0.0 when atan2 saturates; the bottom side only
    // reaches zero by saturating toward the right pinch, where 2*pi is the
    // consistent value.
    match side {
        StripSide::Bottom if theta == 0.0 => TAU,
        _ => {
            if theta == 0.0 {
                0.0
            } else {
                theta
            }
        }
    }
}
