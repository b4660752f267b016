//! Cross-section curves and collocation meshes.
//!
//! Every mesh is expressed in a frame whose origin is the centre of the inner
//! cylinder. Collocation points sit at uniformly spaced polar angles about
//! that origin, so points on the inner and outer curves are paired by angle.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("curve is not star-shaped about the origin at angle {angle} rad")]
    NotStarShaped { angle: f64 },
    #[error("need at least 3 collocation points, got {0}")]
    TooFewPoints(usize),
}

/// A closed cross-section curve described about its own centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Circle {
        radius: f64,
    },
    /// `r(t) = radius + amplitude * sin(frequency * t + phase)`.
    CorrugatedCircle {
        radius: f64,
        amplitude: f64,
        frequency: u32,
        #[serde(default)]
        phase: f64,
    },
    /// Semi-minor axis along x, semi-major along y.
    Ellipse {
        semiminor: f64,
        semimajor: f64,
    },
}

impl CurveSpec {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidCurve(msg));
        match *self {
            CurveSpec::Circle { radius } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return bad(format!("circle radius must be positive, got {radius}"));
                }
            }
            CurveSpec::CorrugatedCircle {
                radius,
                amplitude,
                frequency,
                phase,
            } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return bad(format!("radius must be positive, got {radius}"));
                }
                if !(amplitude.abs() < radius) {
                    return bad(format!(
                        "corrugation amplitude {amplitude} must be smaller than the radius {radius}"
                    ));
                }
                if frequency == 0 {
                    return bad("corrugation frequency must be a positive integer".into());
                }
                if !phase.is_finite() {
                    return bad("corrugation phase must be finite".into());
                }
            }
            CurveSpec::Ellipse {
                semiminor,
                semimajor,
            } => {
                if !(semiminor > 0.0) || !(semimajor >= semiminor) || !semimajor.is_finite() {
                    return bad(format!(
                        "ellipse needs 0 < semiminor <= semimajor, got {semiminor}, {semimajor}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Polar radius about the curve's own centre.
    pub fn radius_at(&self, theta: f64) -> f64 {
        match *self {
            CurveSpec::Circle { radius } => radius,
            CurveSpec::CorrugatedCircle {
                radius,
                amplitude,
                frequency,
                phase,
            } => radius + amplitude * (frequency as f64 * theta + phase).sin(),
            CurveSpec::Ellipse {
                semiminor: b1,
                semimajor: b2,
            } => {
                let (s, c) = theta.sin_cos();
                b1 * b2 / ((b2 * c).powi(2) + (b1 * s).powi(2)).sqrt()
            }
        }
    }

    /// `d r / d theta` of the polar form.
    pub fn radius_derivative(&self, theta: f64) -> f64 {
        match *self {
            CurveSpec::Circle { .. } => 0.0,
            CurveSpec::CorrugatedCircle {
                amplitude,
                frequency,
                phase,
                ..
            } => {
                let nu = frequency as f64;
                amplitude * nu * (nu * theta + phase).cos()
            }
            CurveSpec::Ellipse {
                semiminor: b1,
                semimajor: b2,
            } => {
                let (s, c) = theta.sin_cos();
                let d = (b2 * c).powi(2) + (b1 * s).powi(2);
                b1 * b2 * (b2 * b2 - b1 * b1) * s * c / d.powf(1.5)
            }
        }
    }

    /// Largest polar radius, used to bound ray searches.
    pub fn max_radius(&self) -> f64 {
        match *self {
            CurveSpec::Circle { radius } => radius,
            CurveSpec::CorrugatedCircle {
                radius, amplitude, ..
            } => radius + amplitude.abs(),
            CurveSpec::Ellipse { semimajor, .. } => semimajor,
        }
    }

    /// Characteristic length (the circle radius, or the mean radius).
    pub fn scale_length(&self) -> f64 {
        match *self {
            CurveSpec::Circle { radius } | CurveSpec::CorrugatedCircle { radius, .. } => radius,
            CurveSpec::Ellipse {
                semiminor,
                semimajor,
            } => (semiminor * semimajor).sqrt(),
        }
    }

    fn is_convex_conic(&self) -> bool {
        matches!(self, CurveSpec::Circle { .. } | CurveSpec::Ellipse { .. })
    }
}

/// Outward unit normal of the curve at polar angle `theta` about its centre,
/// from the gradient of `F(r, t) = r - r_curve(t)`.
pub fn outward_normal(spec: &CurveSpec, theta: f64) -> [f64; 2] {
    let r = spec.radius_at(theta);
    let slope = spec.radius_derivative(theta) / r;
    let (s, c) = theta.sin_cos();
    // r_hat - slope * theta_hat
    let nx = c + slope * s;
    let ny = s - slope * c;
    let norm = nx.hypot(ny);
    [nx / norm, ny / norm]
}

/// Rigid placement of a curve: its centre sits at `offset` in the
/// inner-centred frame and it is rotated by `rotation` about that centre.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    #[serde(default)]
    pub offset: [f64; 2],
    #[serde(default)]
    pub rotation: f64,
}

impl Placement {
    pub fn new(offset: [f64; 2], rotation: f64) -> Self {
        Placement {
            offset,
            rotation: rotation.rem_euclid(TAU),
        }
    }

    pub fn identity() -> Self {
        Placement::default()
    }

    pub fn is_centered(&self) -> bool {
        self.offset == [0.0, 0.0]
    }

    fn to_local(self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let dx = p[0] - self.offset[0];
        let dy = p[1] - self.offset[1];
        [c * dx + s * dy, -s * dx + c * dy]
    }

    fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }
}

/// Collocation points on one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBoundary {
    pub points: Vec<[f64; 2]>,
    /// Polar angle of each point about the origin.
    pub angles: Vec<f64>,
    /// Polar radius of each point about the origin.
    pub radii: Vec<f64>,
    pub normals: Vec<[f64; 2]>,
}

impl SampledBoundary {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Distance from the origin to the placed curve along the ray at `theta`,
/// together with the curve-frame angle of the hit point.
pub fn ray_intersection(
    spec: &CurveSpec,
    placement: &Placement,
    theta: f64,
) -> Result<(f64, f64), GeometryError> {
    if placement.is_centered() {
        let local = (theta - placement.rotation).rem_euclid(TAU);
        return Ok((spec.radius_at(local), local));
    }
    let u = placement.to_local([theta.cos(), theta.sin()]);
    let o = placement.to_local([0.0, 0.0]);
    // direction in the local frame excludes the translation
    let dir = [u[0] - o[0], u[1] - o[1]];

    if spec.is_convex_conic() {
        let (b1, b2) = match *spec {
            CurveSpec::Circle { radius } => (radius, radius),
            CurveSpec::Ellipse {
                semiminor,
                semimajor,
            } => (semiminor, semimajor),
            _ => unreachable!(),
        };
        let a = (dir[0] / b1).powi(2) + (dir[1] / b2).powi(2);
        let b = dir[0] * o[0] / (b1 * b1) + dir[1] * o[1] / (b2 * b2);
        let c = (o[0] / b1).powi(2) + (o[1] / b2).powi(2) - 1.0;
        if c >= 0.0 {
            return Err(GeometryError::NotStarShaped { angle: theta });
        }
        let rho = (-b + (b * b - a * c).sqrt()) / a;
        let hit = [o[0] + rho * dir[0], o[1] + rho * dir[1]];
        return Ok((rho, hit[1].atan2(hit[0]).rem_euclid(TAU)));
    }

    // general star-shaped curve: bracket sign changes of |p| - r(angle p)
    let g = |rho: f64| {
        let p = [o[0] + rho * dir[0], o[1] + rho * dir[1]];
        let ang = p[1].atan2(p[0]);
        p[0].hypot(p[1]) - spec.radius_at(ang)
    };
    let reach = spec.max_radius() + o[0].hypot(o[1]);
    let steps = 4000;
    let h = reach * 1.01 / steps as f64;
    let mut crossings = Vec::new();
    let mut prev = g(0.0);
    if prev >= 0.0 {
        return Err(GeometryError::NotStarShaped { angle: theta });
    }
    for i in 1..=steps {
        let cur = g(i as f64 * h);
        if (prev < 0.0) != (cur < 0.0) {
            crossings.push(((i - 1) as f64 * h, i as f64 * h));
        }
        prev = cur;
    }
    if crossings.len() != 1 {
        return Err(GeometryError::NotStarShaped { angle: theta });
    }
    let (mut lo, mut hi) = crossings[0];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    let rho = 0.5 * (lo + hi);
    let p = [o[0] + rho * dir[0], o[1] + rho * dir[1]];
    Ok((rho, p[1].atan2(p[0]).rem_euclid(TAU)))
}

/// Samples `n` points at polar angles `2 pi k / n` about the origin.
pub fn sample_curve(
    spec: &CurveSpec,
    placement: &Placement,
    n: usize,
) -> Result<SampledBoundary, GeometryError> {
    if n < 3 {
        return Err(GeometryError::TooFewPoints(n));
    }
    spec.validate()?;
    let mut out = SampledBoundary {
        points: Vec::with_capacity(n),
        angles: Vec::with_capacity(n),
        radii: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
    };
    for k in 0..n {
        let theta = TAU * k as f64 / n as f64;
        let (rho, local) = ray_intersection(spec, placement, theta)?;
        out.points.push([rho * theta.cos(), rho * theta.sin()]);
        out.angles.push(theta);
        out.radii.push(rho);
        out.normals.push(placement.rotate(outward_normal(spec, local)));
    }
    Ok(out)
}
