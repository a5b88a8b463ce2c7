//! Position estimation from anchor ranges.
//!
//! Two solvers are provided:
//!
//! * [`trilaterate`]: closed form for exactly three anchors. The anchors are
//!   mapped to a canonical frame (anchor 1 at the origin, anchor 2 on +x at
//!   `d12`, anchor 3 at `(i, j)`), where
//!   `x = (d1² - d2² + d12²) / (2 d12)` and
//!   `y = (d1² - d3² + i² + j²) / (2 j) - (i / j) x`.
//!   With anchor 3 on +y (`i = 0`, `j = d13`) this reduces to
//!   `y = (d1² - d3² + d13²) / (2 d13)`.
//! * [`multilaterate_ls`]: damped Gauss-Newton on `sum (|p - a_i| - d_i)²` for
//!   any number of anchors.
//!
//! [`trilaterate_literal`] evaluates the alternative y-form that subtracts an
//! extra `x²` in the numerator. It is only used for side-by-side comparison
//! output: for anchors (0,0), (2,0), (0,2) and a target at (1,1) it yields
//! y = 0.75.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{triangle_area, Point2};

/// Anchor triangles with a smaller area (m²) are treated as collinear.
pub const COLLINEAR_AREA_TOL: f64 = 1e-9;

/// Gauss-Newton stops once a step is shorter than this, m.
pub const LS_STEP_TOL_M: f64 = 1e-10;
pub const LS_MAX_ITERATIONS: usize = 100;

/// Residual (m) above which three circles are reported as not meeting.
const CONSISTENCY_TOL_M: f64 = 1e-6;

pub type AnchorId = u32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocalizationError {
    #[error("degenerate anchor geometry: anchors are collinear or coincident")]
    DegenerateGeometry,
    #[error("insufficient data: {got} usable ranges, need at least {need}")]
    InsufficientData { got: usize, need: usize },
    #[error("unknown anchor id {0}")]
    UnknownAnchor(AnchorId),
    #[error("invalid range {value} for anchor {anchor}")]
    InvalidRange { anchor: AnchorId, value: f64 },
    #[error("duplicate anchor id {0}")]
    DuplicateAnchor(AnchorId),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: AnchorId,
    pub position: Point2,
}

/// Surveyed anchors; at least three, not all on one line.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn new(anchors: Vec<Anchor>) -> Result<Self, LocalizationError> {
        if anchors.len() < 3 {
            return Err(LocalizationError::InsufficientData {
                got: anchors.len(),
                need: 3,
            });
        }
        for (i, a) in anchors.iter().enumerate() {
            if !a.position.is_finite() {
                return Err(LocalizationError::NonFinite("anchor position"));
            }
            if anchors[..i].iter().any(|b| b.id == a.id) {
                return Err(LocalizationError::DuplicateAnchor(a.id));
            }
        }
        if !spans_plane(anchors.iter().map(|a| a.position)) {
            return Err(LocalizationError::DegenerateGeometry);
        }
        Ok(Self { anchors })
    }

    /// Anchors numbered `0..n` in the given order.
    pub fn from_positions(positions: &[Point2]) -> Result<Self, LocalizationError> {
        Self::new(
            positions
                .iter()
                .enumerate()
                .map(|(i, &position)| Anchor {
                    id: i as AnchorId,
                    position,
                })
                .collect(),
        )
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn position(&self, id: AnchorId) -> Option<Point2> {
        self.anchors.iter().find(|a| a.id == id).map(|a| a.position)
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.anchors.len() as f64;
        let sum = self
            .anchors
            .iter()
            .fold(Point2::ORIGIN, |acc, a| acc + a.position);
        sum * (1.0 / n)
    }
}

fn spans_plane(points: impl Iterator<Item = Point2> + Clone) -> bool {
    let pts: Vec<Point2> = points.collect();
    let Some(&first) = pts.first() else {
        return false;
    };
    // Farthest point from the first, then the point farthest off that line.
    let Some(&far) = pts
        .iter()
        .max_by(|a, b| first.distance(**a).total_cmp(&first.distance(**b)))
    else {
        return false;
    };
    pts.iter()
        .map(|&p| triangle_area(first, far, p))
        .fold(0.0, f64::max)
        > COLLINEAR_AREA_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ClosedForm,
    LeastSquares,
}

impl SolveMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveMethod::ClosedForm => "closed_form",
            SolveMethod::LeastSquares => "least_squares",
        }
    }
}

impl std::str::FromStr for SolveMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "closed_form" => Ok(SolveMethod::ClosedForm),
            "least_squares" => Ok(SolveMethod::LeastSquares),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// One solver output, stamped with a time once it enters a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionFix {
    pub t_s: f64,
    pub position: Point2,
    pub sigma_pos_m: f64,
    pub residual_rms_m: f64,
    pub n_ranges_used: usize,
    pub method: SolveMethod,
    pub converged: bool,
}

impl PositionFix {
    pub fn at(mut self, t_s: f64) -> Self {
        self.t_s = t_s;
        self
    }

    pub fn with_uncertainty(mut self, sigma_pos_m: f64) -> Self {
        self.sigma_pos_m = sigma_pos_m;
        self
    }
}

/// Closed-form three-anchor solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trilateration {
    pub position: Point2,
    /// The three circles have no common point; `position` is the
    /// least-squares nearest point instead.
    pub approximate: bool,
}

struct CanonicalFrame {
    origin: Point2,
    ex: Point2,
    ey: Point2,
    d12: f64,
    i: f64,
    j: f64,
}

impl CanonicalFrame {
    fn new(a1: Point2, a2: Point2, a3: Point2) -> Result<Self, LocalizationError> {
        if !(a1.is_finite() && a2.is_finite() && a3.is_finite()) {
            return Err(LocalizationError::NonFinite("anchor position"));
        }
        if triangle_area(a1, a2, a3) <= COLLINEAR_AREA_TOL {
            return Err(LocalizationError::DegenerateGeometry);
        }
        let d12 = a1.distance(a2);
        let ex = (a2 - a1) * (1.0 / d12);
        let v3 = a3 - a1;
        let i = ex.dot(v3);
        let perp = v3 - ex * i;
        let j = perp.norm();
        let ey = perp * (1.0 / j);
        Ok(Self {
            origin: a1,
            ex,
            ey,
            d12,
            i,
            j,
        })
    }

    fn to_world(&self, x: f64, y: f64) -> Point2 {
        self.origin + self.ex * x + self.ey * y
    }
}

fn check_ranges(ds: &[f64]) -> Result<(), LocalizationError> {
    for (k, &d) in ds.iter().enumerate() {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(LocalizationError::InvalidRange {
                anchor: k as AnchorId,
                value: d,
            });
        }
    }
    Ok(())
}

pub fn trilaterate(
    anchors: [Point2; 3],
    d: [f64; 3],
) -> Result<Trilateration, LocalizationError> {
    check_ranges(&d)?;
    let [a1, a2, a3] = anchors;
    let f = CanonicalFrame::new(a1, a2, a3)?;
    let [d1, d2, d3] = d;
    let x = (d1 * d1 - d2 * d2 + f.d12 * f.d12) / (2.0 * f.d12);
    let y = (d1 * d1 - d3 * d3 + f.i * f.i + f.j * f.j) / (2.0 * f.j) - (f.i / f.j) * x;
    let candidate = f.to_world(x, y);

    let worst = anchors
        .iter()
        .zip(d)
        .map(|(a, di)| (candidate.distance(*a) - di).abs())
        .fold(0.0, f64::max);
    let scale = d.iter().fold(f.d12, |m, v| m.max(*v)).max(1.0);
    if worst <= CONSISTENCY_TOL_M * scale {
        return Ok(Trilateration {
            position: candidate,
            approximate: false,
        });
    }

    let set = AnchorSet::from_positions(&anchors)?;
    let ranges: Vec<(AnchorId, f64)> = (0..3).map(|k| (k as AnchorId, d[k])).collect();
    // symmetric layouts can park a single descent on a saddle
    let centroid = set.centroid();
    let mut starts = vec![candidate, centroid];
    for (a, di) in anchors.iter().zip(d) {
        let towards = centroid - *a;
        let len = towards.norm();
        if len > 0.0 {
            starts.push(*a + towards * (di / len));
        }
    }
    let mut best: Option<PositionFix> = None;
    for s in starts {
        let fix = multilaterate_ls(&set, &ranges, s)?;
        if best.map_or(true, |b| fix.residual_rms_m < b.residual_rms_m) {
            best = Some(fix);
        }
    }
    Ok(Trilateration {
        position: best.expect("at least one start").position,
        approximate: true,
    })
}

/// Alternative y-form with an extra `- x²` in the numerator, evaluated in the
/// same canonical frame (anchor 3 taken at distance `d13` along +y).
pub fn trilaterate_literal(
    anchors: [Point2; 3],
    d: [f64; 3],
) -> Result<Point2, LocalizationError> {
    check_ranges(&d)?;
    let [a1, a2, a3] = anchors;
    let f = CanonicalFrame::new(a1, a2, a3)?;
    let d13 = a1.distance(a3);
    let [d1, d2, d3] = d;
    let x = (d1 * d1 - d2 * d2 + f.d12 * f.d12) / (2.0 * f.d12);
    let y = (d1 * d1 - d3 * d3 + d13 * d13 - x * x) / (2.0 * d13);
    Ok(f.to_world(x, y))
}

/// Least-squares position from two or more ranges (three for a unique 2D fix).
///
/// Minimises `sum (|p - a_i| - d_i)²` with Levenberg-damped Newton steps, falling
/// back to the Gauss-Newton matrix where the full Hessian is indefinite.
/// Stops when a step is shorter than [`LS_STEP_TOL_M`] or after
/// [`LS_MAX_ITERATIONS`]; in the latter case the best iterate is returned with
/// `converged = false`. The descent runs from `initial_guess` and from the
/// linearised solution of the range equations; the lower-cost end point wins.
pub fn multilaterate_ls(
    anchors: &AnchorSet,
    ranges: &[(AnchorId, f64)],
    initial_guess: Point2,
) -> Result<PositionFix, LocalizationError> {
    if !initial_guess.is_finite() {
        return Err(LocalizationError::NonFinite("initial_guess"));
    }
    let mut obs: Vec<(Point2, f64)> = Vec::with_capacity(ranges.len());
    for &(id, d) in ranges {
        let a = anchors
            .position(id)
            .ok_or(LocalizationError::UnknownAnchor(id))?;
        if !(d >= 0.0) || !d.is_finite() {
            return Err(LocalizationError::InvalidRange { anchor: id, value: d });
        }
        obs.push((a, d));
    }
    if obs.len() < 3 {
        return Err(LocalizationError::InsufficientData {
            got: obs.len(),
            need: 3,
        });
    }
    if !spans_plane(obs.iter().map(|o| o.0)) {
        return Err(LocalizationError::DegenerateGeometry);
    }

    let mut best = descend(&obs, initial_guess);
    if let Some(linear) = linear_estimate(&obs) {
        let alt = descend(&obs, linear);
        if alt.1 < best.1 {
            best = alt;
        }
    }
    let (p, c, converged) = best;

    Ok(PositionFix {
        t_s: 0.0,
        position: p,
        sigma_pos_m: 0.0,
        residual_rms_m: (c / obs.len() as f64).sqrt(),
        n_ranges_used: obs.len(),
        method: SolveMethod::LeastSquares,
        converged,
    })
}

/// Damped descent from `start`; returns (position, cost, converged).
fn descend(obs: &[(Point2, f64)], start: Point2) -> (Point2, f64, bool) {
    let cost = |p: Point2| -> f64 {
        obs.iter()
            .map(|(a, d)| {
                let r = p.distance(*a) - d;
                r * r
            })
            .sum()
    };

    let mut p = start;
    let mut c = cost(p);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..LS_MAX_ITERATIONS {
        // normal equations JᵀJ δ = -Jᵀr, Jacobian rows are unit vectors
        let (mut h00, mut h01, mut h11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        // residual curvature r/|p-a| (I - JJᵀ), added when it keeps H positive definite
        let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
        for (a, d) in obs {
            let diff = p - *a;
            let dist = diff.norm();
            let r = dist - d;
            let (jx, jy) = if dist > 1e-12 {
                (diff.x / dist, diff.y / dist)
            } else {
                (0.0, 0.0)
            };
            h00 += jx * jx;
            h01 += jx * jy;
            h11 += jy * jy;
            g0 += jx * r;
            g1 += jy * r;
            if dist > 1e-12 {
                let k = r / dist;
                s00 += k * (1.0 - jx * jx);
                s01 -= k * jx * jy;
                s11 += k * (1.0 - jy * jy);
            }
        }
        let (f00, f01, f11) = (h00 + s00, h01 + s01, h11 + s11);
        if f00 > 0.0 && f00 * f11 - f01 * f01 > 0.0 {
            (h00, h01, h11) = (f00, f01, f11);
        }

        let mut accepted = None;
        // retry with growing damping until the cost does not increase
        for _ in 0..60 {
            let a00 = h00 + lambda * h00.max(1e-12);
            let a11 = h11 + lambda * h11.max(1e-12);
            let det = a00 * a11 - h01 * h01;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let step = Point2::new(-(a11 * g0 - h01 * g1) / det, -(a00 * g1 - h01 * g0) / det);
            let trial = p + step;
            let trial_cost = cost(trial);
            if trial_cost <= c {
                accepted = Some((trial, trial_cost, step.norm()));
                lambda = (lambda * 0.1).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }

        match accepted {
            Some((trial, trial_cost, step_len)) => {
                p = trial;
                c = trial_cost;
                if step_len < LS_STEP_TOL_M {
                    converged = true;
                    break;
                }
            }
            // no descent direction left: p is a stationary point
            None => {
                converged = true;
                break;
            }
        }
    }
    (p, c, converged)
}

/// Solution of the linear system obtained by subtracting the first range
/// equation from the others; exact for consistent ranges.
fn linear_estimate(obs: &[(Point2, f64)]) -> Option<Point2> {
    let (a0, d0) = obs[0];
    let (mut m00, mut m01, mut m11, mut v0, mut v1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(a, d) in &obs[1..] {
        let row = (a - a0) * 2.0;
        let rhs = a.dot(a) - a0.dot(a0) - d * d + d0 * d0;
        m00 += row.x * row.x;
        m01 += row.x * row.y;
        m11 += row.y * row.y;
        v0 += row.x * rhs;
        v1 += row.y * rhs;
    }
    let det = m00 * m11 - m01 * m01;
    if !(det.abs() > 1e-18 * (m00 * m11).max(1e-300)) {
        return None;
    }
    let p = Point2::new((m11 * v0 - m01 * v1) / det, (m00 * v1 - m01 * v0) / det);
    p.is_finite().then_some(p)
}

/// `sqrt(sigma_tof² + sigma_sync²)`, both already in metres.
pub fn combine_uncertainty(sigma_tof_m: f64, sigma_sync_m: f64) -> f64 {
    sigma_tof_m.hypot(sigma_sync_m)
}
