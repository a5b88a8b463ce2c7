//! Trajectory comparison against ground truth.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::localization::PositionFix;

/// Fewest histogram bins emitted.
pub const MIN_HISTOGRAM_BINS: usize = 20;

/// Bin window used when every error is identical.
const DEGENERATE_HISTOGRAM_SPAN_M: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("ground truth needs at least 2 points, got {0}")]
    TooFewTruthPoints(usize),
    #[error("ground truth timestamps must be strictly increasing (row {0})")]
    NonMonotonicTruth(usize),
    #[error("non-finite value in ground truth row {0}")]
    NonFiniteTruth(usize),
    #[error("no fix overlaps the ground-truth time span")]
    NoOverlap,
    #[error("no samples")]
    Empty,
    #[error("{what} must be positive, got {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub t: f64,
    pub position: Point2,
    pub label: Option<String>,
}

/// Time-stamped reference path, linearly interpolated between points.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrack {
    points: Vec<TruthPoint>,
}

impl GroundTruthTrack {
    pub fn new(points: Vec<TruthPoint>) -> Result<Self, EvalError> {
        if points.len() < 2 {
            return Err(EvalError::TooFewTruthPoints(points.len()));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.t.is_finite() || !p.position.is_finite() {
                return Err(EvalError::NonFiniteTruth(i));
            }
            if i > 0 && !(p.t > points[i - 1].t) {
                return Err(EvalError::NonMonotonicTruth(i));
            }
        }
        Ok(Self { points })
    }

    pub fn from_samples(samples: impl IntoIterator<Item = (f64, Point2)>) -> Result<Self, EvalError> {
        Self::new(
            samples
                .into_iter()
                .map(|(t, position)| TruthPoint {
                    t,
                    position,
                    label: None,
                })
                .collect(),
        )
    }

    pub fn points(&self) -> &[TruthPoint] {
        &self.points
    }

    pub fn start_s(&self) -> f64 {
        self.points[0].t
    }

    pub fn end_s(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    /// Interpolated position for `t` inside the span.
    pub fn position_at(&self, t: f64) -> Option<Point2> {
        if !(t >= self.start_s() && t <= self.end_s()) {
            return None;
        }
        let k = self.points.partition_point(|p| p.t < t);
        if k == 0 {
            return Some(self.points[0].position);
        }
        let (a, b) = (&self.points[k - 1], &self.points[k]);
        Some(a.position.lerp(b.position, (t - a.t) / (b.t - a.t)))
    }

    /// Time to the closest truth sample.
    pub fn gap_s(&self, t: f64) -> f64 {
        let k = self.points.partition_point(|p| p.t < t);
        let after = self.points.get(k).map_or(f64::INFINITY, |p| p.t - t);
        let before = k.checked_sub(1).map_or(f64::INFINITY, |i| t - self.points[i].t);
        after.min(before)
    }

    pub fn path_length_m(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].position.distance(w[1].position))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub pairs: Vec<(PositionFix, Point2)>,
    pub dropped: usize,
}

/// Pair each fix with the interpolated truth at its timestamp.
pub fn align(
    fixes: &[PositionFix],
    truth: &GroundTruthTrack,
    max_gap_s: f64,
) -> Result<Alignment, EvalError> {
    if !(max_gap_s > 0.0) {
        return Err(EvalError::Domain {
            what: "max_gap_s",
            value: max_gap_s,
        });
    }
    let mut pairs = Vec::with_capacity(fixes.len());
    for f in fixes {
        if truth.gap_s(f.t_s) > max_gap_s {
            continue;
        }
        if let Some(p) = truth.position_at(f.t_s) {
            pairs.push((*f, p));
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    let dropped = fixes.len() - pairs.len();
    Ok(Alignment { pairs, dropped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_lo_m: f64,
    pub bin_hi_m: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub mean_m: f64,
    /// Population standard deviation.
    pub sigma_m: f64,
    pub max_m: f64,
    pub fitted_mu_m: f64,
    pub fitted_sigma_m: f64,
    pub histogram: Vec<HistogramBin>,
}

impl ErrorStats {
    pub fn from_errors(errors: &[f64]) -> Result<Self, EvalError> {
        if errors.is_empty() {
            return Err(EvalError::Empty);
        }
        if errors.iter().any(|e| !e.is_finite()) {
            return Err(EvalError::Degenerate("non-finite error value"));
        }
        let n = errors.len();
        let mean = errors.iter().sum::<f64>() / n as f64;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
        let sigma = var.sqrt();
        let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            n,
            mean_m: mean,
            sigma_m: sigma,
            max_m: max,
            fitted_mu_m: mean,
            fitted_sigma_m: sigma,
            histogram: histogram(errors),
        })
    }

    /// `pdf_fit` value for a bin: the fitted density at its centre.
    pub fn pdf_at(&self, x: f64) -> f64 {
        gaussian_pdf(x, self.fitted_mu_m, self.fitted_sigma_m).unwrap_or(0.0)
    }
}

/// Euclidean error statistics over aligned pairs.
pub fn error_stats(pairs: &[(PositionFix, Point2)]) -> Result<ErrorStats, EvalError> {
    let errors: Vec<f64> = pairs.iter().map(|(f, t)| f.position.distance(*t)).collect();
    ErrorStats::from_errors(&errors)
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(&next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// Freedman-Diaconis bins over `[min, max]`, at least [`MIN_HISTOGRAM_BINS`].
fn histogram(values: &[f64]) -> Vec<HistogramBin> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let (mut lo, mut hi) = (sorted[0], sorted[n - 1]);
    if hi - lo <= 0.0 {
        lo -= DEGENERATE_HISTOGRAM_SPAN_M / 2.0;
        hi += DEGENERATE_HISTOGRAM_SPAN_M / 2.0;
    }
    let span = hi - lo;
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let fd_width = 2.0 * iqr / (n as f64).cbrt();
    let max_bins = MIN_HISTOGRAM_BINS.max(n);
    let bins = if fd_width > 0.0 {
        ((span / fd_width).ceil() as usize).clamp(MIN_HISTOGRAM_BINS, max_bins)
    } else {
        MIN_HISTOGRAM_BINS
    };
    let width = span / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in &sorted {
        let k = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            bin_lo_m: lo + k as f64 * width,
            bin_hi_m: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width },
            count,
        })
        .collect()
}

/// Normal density, 1/m.
pub fn gaussian_pdf(x: f64, mu: f64, sigma: f64) -> Result<f64, EvalError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(EvalError::Domain {
            what: "sigma",
            value: sigma,
        });
    }
    let z = (x - mu) / sigma;
    Ok((-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt()))
}

/// Denominator of the percentage distance error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PctNorm {
    /// Total truth path length divided by the number of samples.
    #[default]
    PathScale,
    /// Distance of each truth point from the arena origin.
    TruthDistance,
}

impl PctNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            PctNorm::PathScale => "path_scale",
            PctNorm::TruthDistance => "truth_distance",
        }
    }
}

impl std::str::FromStr for PctNorm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "path_scale" => Ok(PctNorm::PathScale),
            "truth_distance" => Ok(PctNorm::TruthDistance),
            other => Err(format!("unknown normalisation `{other}` (path_scale, truth_distance)")),
        }
    }
}

/// Mean and population sigma of the per-sample percentage error.
///
/// The truth path is the sequence of truth positions in `pairs`.
pub fn percent_distance_error(
    pairs: &[(PositionFix, Point2)],
    norm: PctNorm,
) -> Result<(f64, f64), EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let pct: Vec<f64> = match norm {
        PctNorm::PathScale => {
            let length: f64 = pairs.windows(2).map(|w| w[0].1.distance(w[1].1)).sum();
            let scale = length / pairs.len() as f64;
            if !(scale > 0.0) {
                return Err(EvalError::Degenerate("ground-truth path has zero length"));
            }
            pairs
                .iter()
                .map(|(f, t)| 100.0 * f.position.distance(*t) / scale)
                .collect()
        }
        PctNorm::TruthDistance => {
            let mut out = Vec::with_capacity(pairs.len());
            for (f, t) in pairs {
                let r = t.norm();
                if !(r > 0.0) {
                    return Err(EvalError::Degenerate("truth point at the origin"));
                }
                out.push(100.0 * f.position.distance(*t) / r);
            }
            out
        }
    };
    let n = pct.len() as f64;
    let mean = pct.iter().sum::<f64>() / n;
    let sigma = (pct.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok((mean, sigma))
}
