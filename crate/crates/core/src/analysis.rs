//! Shape diagnostics for excitation spectra p_k: lobes, main lobe and
//! collapse under the rescaling κ = kM.

use crate::error::{Error, Result};

/// Relative prominence below which a local maximum is a ripple, not a lobe.
pub const LOBE_PROMINENCE: f64 = 1e-3;
/// A spectrum's main lobe extends from the smallest k while p_k stays above
/// this fraction of the peak.
pub const MAIN_LOBE_LEVEL: f64 = 0.1;

/// Topographic prominence of sample i (assumed a local maximum): its height
/// above the higher of the two lowest points separating it from higher
/// ground on either side. A side with no higher ground uses its minimum up
/// to the boundary; a boundary sample has only one side.
fn prominence(p: &[f64], i: usize) -> f64 {
    let side = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut low = p[i];
        let mut any = false;
        for j in range {
            if p[j] > p[i] {
                break;
            }
            low = low.min(p[j]);
            any = true;
        }
        any.then_some(low)
    };
    let left = side(&mut (0..i).rev());
    let right = side(&mut (i + 1..p.len()));
    let base = match (left, right) {
        (Some(a), Some(b)) => a.max(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 0.0,
    };
    p[i] - base
}

/// Indices of lobes: local maxima (including the first sample when it
/// exceeds its neighbour) whose prominence is at least
/// `rel_prominence · max p`.
pub fn lobe_peaks(p: &[f64], rel_prominence: f64) -> Vec<usize> {
    let n = p.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![0];
    }
    let top = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = rel_prominence * top;
    (0..n)
        .filter(|&i| {
            let left_ok = i == 0 || p[i] > p[i - 1];
            let right_ok = if i + 1 < n {
                p[i] >= p[i + 1]
            } else {
                i > 0 && p[i] > p[i - 1]
            };
            left_ok && right_ok && (i > 0 || p[0] > p[1])
        })
        .filter(|&i| prominence(p, i) >= threshold)
        .collect()
}

/// Number of samples in the main lobe: the leading run with
/// `p ≥ level · max p`.
pub fn main_lobe_len(p: &[f64], level: f64) -> usize {
    let top = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    p.iter().take_while(|&&v| v >= level * top).count()
}

/// Linear interpolation of (x, y) at `at`; x ascending.
pub fn interpolate(x: &[f64], y: &[f64], at: f64) -> Option<f64> {
    if x.is_empty() || at < x[0] || at > x[x.len() - 1] {
        return None;
    }
    let j = x.partition_point(|&v| v < at);
    if j == 0 {
        return Some(y[0]);
    }
    let (x0, x1, y0, y1) = (x[j - 1], x[j], y[j - 1], y[j]);
    Some(y0 + (y1 - y0) * (at - x0) / (x1 - x0))
}

/// One spectrum for a collapse test.
#[derive(Debug, Clone)]
pub struct Curve<'a> {
    pub cutoff: usize,
    pub k: &'a [f64],
    pub p: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseReport {
    /// max over curves and main-lobe points of |p_M(κ) − p_ref(κ)| / p_ref(κ)
    pub max_relative_deviation: f64,
    /// κ range of the reference main lobe that was compared
    pub kappa_range: (f64, f64),
    pub points: usize,
}

/// Compares every curve against `reference` on the reference's main lobe
/// in the variable κ = kM, interpolating linearly in κ. Reference points
/// below the smallest κ of a curve are skipped for that curve.
pub fn collapse(reference: &Curve, others: &[Curve], level: f64) -> Result<CollapseReport> {
    let lobe = main_lobe_len(reference.p, level);
    if lobe == 0 {
        return Err(Error::invalid("reference spectrum has an empty main lobe"));
    }
    let scale = |c: &Curve| -> Vec<f64> { c.k.iter().map(|k| k * c.cutoff as f64).collect() };
    let kappa_ref = scale(reference);
    let mut worst = 0.0f64;
    let mut points = 0;
    for c in others {
        if c.k.len() != c.p.len() {
            return Err(Error::invalid("curve with mismatched k and p lengths"));
        }
        let kappa = scale(c);
        for (&at, &r) in kappa_ref.iter().zip(reference.p).take(lobe) {
            if let Some(v) = interpolate(&kappa, c.p, at) {
                worst = worst.max((v - r).abs() / r);
                points += 1;
            }
        }
    }
    if points == 0 {
        return Err(Error::invalid("no overlapping κ points between curves"));
    }
    Ok(CollapseReport {
        max_relative_deviation: worst,
        kappa_range: (kappa_ref[0], kappa_ref[lobe - 1]),
        points,
    })
}
