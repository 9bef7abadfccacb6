use crate::diffcore::{value, Objective};
use crate::error::{Error, Result};

use super::sharpness::probe_direction;
use super::ProbeSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapePoint {
    pub eta: f64,
    pub loss: f64,
}

/// Losses along `x − η·v` over the step-size grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    /// `f(x)`, the implicit `η = 0` anchor.
    pub baseline: f64,
    pub points: Vec<LandscapePoint>,
}

impl Landscape {
    /// Grid point with the lowest loss; the first one on ties.
    pub fn argmin(&self) -> Option<LandscapePoint> {
        self.points
            .iter()
            .copied()
            .reduce(|best, p| if p.loss < best.loss { p } else { best })
    }

    pub fn min_loss(&self) -> f64 {
        self.argmin().map_or(f64::INFINITY, |p| p.loss)
    }
}

/// Log-spaced grid with exact endpoints.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max > min && max.is_finite()) || points < 2 {
        return Err(Error::InvalidParameter(format!(
            "log grid needs 0 < min < max and ≥ 2 points, got [{min}, {max}] × {points}"
        )));
    }
    let (lo, hi) = (min.ln(), max.ln());
    let n = points - 1;
    let mut grid: Vec<f64> = (0..=n).map(|i| (lo + (hi - lo) * i as f64 / n as f64).exp()).collect();
    grid[0] = min;
    grid[n] = max;
    Ok(grid)
}

/// Evaluates `f(x − η·v)` for each grid entry. `x` is only read; each
/// displaced point is built fresh. Non-finite losses become `+∞`.
pub fn landscape_scan<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    u: &[f64],
    spec: &ProbeSpec,
) -> Result<Landscape> {
    if spec.grid.is_empty() {
        return Err(Error::contract("landscape grid is empty"));
    }
    let v = probe_direction(u, spec.normalize)?;
    let baseline = value(obj, x)?;
    let mut displaced = vec![0.0; x.len()];
    let points = spec
        .grid
        .iter()
        .map(|&eta| {
            for ((d, xi), vi) in displaced.iter_mut().zip(x).zip(v.iter()) {
                *d = xi - eta * vi;
            }
            let loss = match value(obj, &displaced) {
                Ok(f) => f,
                Err(Error::NumericOverflow(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(LandscapePoint { eta, loss })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Landscape { baseline, points })
}
