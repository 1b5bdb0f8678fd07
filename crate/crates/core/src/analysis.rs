//! Correlation, regression, Pareto and rank–frequency analytics.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::RankEntry;
use crate::error::{shape_err, Error, Result};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample Pearson correlation, clamped to `[-1, 1]`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return shape_err("pearson", format!("{} xs vs {} ys", xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!("pearson needs 2 points, got {}", xs.len())));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("y"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept` with `R² = 1 - SS_res/SS_tot`
/// (1 when `y` is constant, since the fit is then exact).
pub fn fit_single_predictor(points: &[(f64, f64)]) -> Result<Regression> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("regression needs 3 points, got {}", points.len())));
    }
    ols(points)
}

fn ols(points: &[(f64, f64)]) -> Result<Regression> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| {
            let e = y - slope * x - intercept;
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(Regression { slope, intercept, r2 })
}

/// Indices (ascending) of the points not dominated when minimising both
/// coordinates. Exact duplicates never dominate each other.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0).then(points[a].1.total_cmp(&points[b].1)));
    let mut front = Vec::new();
    let mut best_y = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let p = points[order[i]];
        let mut j = i;
        while j < order.len() && points[order[j]] == p {
            j += 1;
        }
        if p.1 < best_y {
            front.extend_from_slice(&order[i..j]);
            best_y = p.1;
        }
        i = j;
    }
    front.sort_unstable();
    front
}

/// `p` dominates `q` under joint minimisation.
pub fn dominates(p: (f64, f64), q: (f64, f64)) -> bool {
    p.0 <= q.0 && p.1 <= q.1 && (p.0 < q.0 || p.1 < q.1)
}

/// Lower convex envelope of the points, left to right.
pub fn lower_convex_envelope(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

fn log_points(entries: &[RankEntry]) -> Vec<(f64, f64)> {
    entries.iter().map(|e| (libm::log10(e.rank as f64), libm::log10(e.count as f64))).collect()
}

/// Least-squares fit of log₁₀ frequency on log₁₀ rank over ranks whose
/// frequency is at least 2.
pub fn rank_frequency_slope(entries: &[RankEntry]) -> Result<Regression> {
    let kept: Vec<RankEntry> = entries.iter().copied().filter(|e| e.count >= 2).collect();
    if kept.len() < 2 {
        return Err(Error::InsufficientData(format!("{} ranks with frequency >= 2", kept.len())));
    }
    ols(&log_points(&kept))
}

/// Log–log slope over the upper half of the ranks (`rank >= R/2`), where a
/// sharp "cliff" shows up as a steep negative slope.
pub fn tail_slope(entries: &[RankEntry]) -> Result<Regression> {
    let r = entries.len();
    let tail: Vec<RankEntry> = entries.iter().copied().filter(|e| 2 * e.rank >= r).collect();
    if tail.len() < 2 {
        return Err(Error::InsufficientData(format!("{r} ranks are too few for a tail fit")));
    }
    ols(&log_points(&tail))
}
