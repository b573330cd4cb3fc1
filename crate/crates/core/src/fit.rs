//! Weighted straight-line fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Weighted coefficient of determination.
    pub r2: f64,
    pub count: usize,
}

impl LineFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Abscissa where the line crosses zero.
    pub fn root(&self) -> f64 {
        -self.intercept / self.slope
    }
}

/// Least-squares line through `(x, y)` with per-point weights.
pub fn weighted_line(xs: &[f64], ys: &[f64], weights: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n || weights.len() != n {
        return Err(Error::Analysis(format!("line fit needs at least two points, got {n}")));
    }
    let sw: f64 = weights.iter().sum();
    let mx = xs.iter().zip(weights).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ys.iter().zip(weights).map(|(y, w)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(weights) {
        let dx = x - mx;
        let dy = y - my;
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(Error::Analysis("degenerate abscissae in line fit".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(LineFit { slope, intercept, r2, count: n })
}

pub fn line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    weighted_line(xs, ys, &vec![1.0; xs.len()])
}
