//! The real projective line, fixed points of hyperbolic matrices and
//! invariant cones.
//!
//! A point of ℝP¹ is a line through the origin, stored as its angle in
//! `[0, π)`. Matrices with positive determinant act on ℝP¹ preserving the
//! cyclic (counter-clockwise) order, so the image of the arc from `p` to `q`
//! is the arc from `m(p)` to `m(q)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cocycle::Mat2;
use crate::error::{Error, Result};

/// Slack on `|det − 1|`, relative to the squared size of the entries.
pub const UNIMODULAR_TOL: f64 = 1e-10;

/// Traces in `(2, 2 + NEAR_PARABOLIC]` are too close to parabolic for a
/// reliable eigen-decomposition.
pub const NEAR_PARABOLIC: f64 = 1e-12;

/// Required clearance of a mapped cone inside the original one.
pub const CONE_MARGIN: f64 = 1e-9;

fn wrap(angle: f64) -> f64 {
    let t = angle.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// A line through the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectivePoint {
    angle: f64,
}

impl ProjectivePoint {
    pub fn new(angle: f64) -> Self {
        Self { angle: wrap(angle) }
    }

    /// The line spanned by a nonzero vector.
    pub fn from_vector(v: [f64; 2]) -> Self {
        Self::new(v[1].atan2(v[0]))
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// Unit representative `(cos θ, sin θ)`.
    pub fn vector(&self) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        [c, s]
    }

    /// Counter-clockwise offset from `origin` to `self`, in `[0, π)`.
    pub fn offset_from(&self, origin: ProjectivePoint) -> f64 {
        wrap(self.angle - origin.angle)
    }
}

/// `sin` of the angle between two lines.
pub fn proj_distance(p: ProjectivePoint, q: ProjectivePoint) -> f64 {
    (p.angle - q.angle).sin().abs()
}

/// Image of `p` under `m`.
pub fn moebius_apply(m: &Mat2, p: ProjectivePoint) -> Result<ProjectivePoint> {
    let det = m.det();
    if det == 0.0 || det.abs() <= f64::EPSILON * m.max_abs().powi(2) || !det.is_finite() {
        return Err(Error::Domain(format!("matrix {m:?} is singular")));
    }
    Ok(ProjectivePoint::from_vector(m.apply(p.vector())))
}

fn check_unimodular(m: &Mat2) -> Result<()> {
    if (m.det() - 1.0).abs() > UNIMODULAR_TOL * m.max_abs().powi(2).max(1.0) {
        return Err(Error::Domain(format!("determinant {} is not 1", m.det())));
    }
    Ok(())
}

/// `|tr m| > 2` for a matrix of determinant one.
pub fn is_hyperbolic(m: &Mat2) -> Result<bool> {
    check_unimodular(m)?;
    Ok(m.trace().abs() > 2.0)
}

/// Source and sink of a hyperbolic matrix with their multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoints {
    /// Eigendirection of the contracting eigenvalue.
    pub source: ProjectivePoint,
    /// Eigendirection of the expanding eigenvalue.
    pub sink: ProjectivePoint,
    /// `(ξ_s, ξ_u)` with `|ξ_s| < 1 < |ξ_u|`.
    pub multipliers: (f64, f64),
}

fn eigendirection(m: &Mat2, xi: f64) -> ProjectivePoint {
    let r1 = [m.b, xi - m.a];
    let r2 = [xi - m.d, m.c];
    let n1 = r1[0].hypot(r1[1]);
    let n2 = r2[0].hypot(r2[1]);
    ProjectivePoint::from_vector(if n1 >= n2 { r1 } else { r2 })
}

pub fn fixed_points(m: &Mat2) -> Result<FixedPoints> {
    check_unimodular(m)?;
    let tr = m.trace();
    if tr.abs() <= 2.0 {
        return Err(Error::NotHyperbolic {
            index: 0,
            trace: tr,
        });
    }
    if tr.abs() <= 2.0 + NEAR_PARABOLIC {
        return Err(Error::IllConditioned(format!(
            "trace {tr} is too close to ±2"
        )));
    }
    let det = m.det();
    let disc = (tr * tr - 4.0 * det).sqrt();
    let xi_u = 0.5 * (tr + tr.signum() * disc);
    let xi_s = det / xi_u;
    Ok(FixedPoints {
        source: eigendirection(m, xi_s),
        sink: eigendirection(m, xi_u),
        multipliers: (xi_s, xi_u),
    })
}

/// Proper open arc `{start + t : 0 < t < width}` with `0 < width < π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    start: ProjectivePoint,
    width: f64,
}

impl Arc {
    pub fn new(start: f64, width: f64) -> Result<Self> {
        if !(width > 0.0 && width < PI) {
            return Err(Error::Domain(format!(
                "arc width must lie in (0, π), got {width}"
            )));
        }
        Ok(Self {
            start: ProjectivePoint::new(start),
            width,
        })
    }

    pub fn start(&self) -> ProjectivePoint {
        self.start
    }

    pub fn end(&self) -> ProjectivePoint {
        ProjectivePoint::new(self.start.angle + self.width)
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn contains(&self, p: ProjectivePoint) -> bool {
        let t = p.offset_from(self.start);
        t > 0.0 && t < self.width
    }

    /// Whether `m` maps the closed arc into the open arc with clearance
    /// `margin` at both ends. Requires `det m > 0`.
    pub fn maps_into_itself(&self, m: &Mat2, margin: f64) -> Result<bool> {
        if !(m.det() > 0.0) {
            return Err(Error::Domain(
                "cone test needs an orientation-preserving matrix".into(),
            ));
        }
        let p = moebius_apply(m, self.start)?;
        let q = moebius_apply(m, self.end())?;
        let lo = p.offset_from(self.start);
        let image_width = q.offset_from(p);
        Ok(lo >= margin && lo + image_width <= self.width - margin)
    }
}

/// Complement component of the sources that holds all sinks: the open arc
/// from one source to the next. With a single distinct source it is the
/// whole line minus that point, so its width may equal π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkComponent {
    pub start: ProjectivePoint,
    pub width: f64,
}

impl SinkComponent {
    pub fn contains(&self, p: ProjectivePoint) -> bool {
        let t = p.offset_from(self.start);
        t > 0.0 && t < self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSinkResult {
    pub holds: bool,
    pub sink_component: Option<SinkComponent>,
}

fn family_fixed_points(family: &[Mat2]) -> Result<Vec<FixedPoints>> {
    family
        .iter()
        .enumerate()
        .map(|(index, m)| {
            fixed_points(m).map_err(|e| match e {
                Error::NotHyperbolic { trace, .. } => Error::NotHyperbolic { index, trace },
                other => other,
            })
        })
        .collect()
}

/// Do all sinks lie in one component of ℝP¹ minus the sources?
pub fn source_sink_condition(family: &[Mat2]) -> Result<SourceSinkResult> {
    let fps = family_fixed_points(family)?;
    Ok(source_sink_from(&fps))
}

pub(crate) fn source_sink_from(fps: &[FixedPoints]) -> SourceSinkResult {
    let none = SourceSinkResult {
        holds: false,
        sink_component: None,
    };
    let Some(first) = fps.first() else {
        return none;
    };
    // Sources as offsets from the first one, sorted around the circle.
    let origin = first.source;
    let mut cuts: Vec<f64> = fps.iter().map(|f| f.source.offset_from(origin)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.push(PI);
    let sinks: Vec<f64> = fps.iter().map(|f| f.sink.offset_from(origin)).collect();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if sinks.iter().all(|&s| s > lo && s < hi) {
            return SourceSinkResult {
                holds: true,
                sink_component: Some(SinkComponent {
                    start: ProjectivePoint::new(origin.angle + lo),
                    width: hi - lo,
                }),
            };
        }
    }
    none
}

/// Padding fractions tried, in order, when growing the sink hull toward the
/// sources.
const PADDINGS: [f64; 10] = [0.1, 0.05, 0.2, 0.025, 0.4, 0.0125, 0.6, 0.8, 0.005, 0.9];

/// An open arc around all sinks that every member maps strictly into itself.
///
/// Returns `Ok(None)` when no candidate passes verification.
pub fn invariant_cone(family: &[Mat2]) -> Result<Option<Arc>> {
    let fps = family_fixed_points(family)?;
    let ss = source_sink_from(&fps);
    let Some(component) = ss.sink_component else {
        return Err(Error::Precondition(
            "family violates the source-sink condition".into(),
        ));
    };
    cone_in_component(family, &fps, &component)
}

pub(crate) fn cone_in_component(
    family: &[Mat2],
    fps: &[FixedPoints],
    component: &SinkComponent,
) -> Result<Option<Arc>> {
    let offsets: Vec<f64> = fps
        .iter()
        .map(|f| f.sink.offset_from(component.start))
        .collect();
    let lo = offsets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let room_lo = lo;
    let room_hi = component.width - hi;
    for frac in PADDINGS {
        let a = lo - frac * room_lo;
        let b = hi + frac * room_hi;
        let Ok(arc) = Arc::new(component.start.angle + a, b - a) else {
            continue;
        };
        let mut ok = true;
        for m in family {
            if !arc.maps_into_itself(m, CONE_MARGIN)? {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(Some(arc));
        }
    }
    Ok(None)
}
