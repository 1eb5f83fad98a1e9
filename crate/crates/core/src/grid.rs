//! Grid-sampled functions on [0, 1]: the shared time grid, interpolation,
//! quadrature, and finite differences used by every other module.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Discretization of the domain [0, 1].
///
/// Points are strictly increasing with `points[0] == 0` and
/// `points[m-1] == 1`, `m >= 3`. All functions in one panel share a single
/// grid; external inputs on other grids are resampled at load time.
#[derive(Debug, Clone)]
pub struct TimeGrid {
    points: Arc<Vec<f64>>,
    uniform: bool,
}

impl PartialEq for TimeGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.points, &other.points) || self.points == other.points
    }
}

impl TimeGrid {
    /// Uniform grid of `m` points on [0, 1].
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {m}")));
        }
        let denom = (m - 1) as f64;
        let points: Vec<f64> = (0..m).map(|j| j as f64 / denom).collect();
        Ok(TimeGrid {
            points: Arc::new(points),
            uniform: true,
        })
    }

    /// Grid from explicit points; validates the invariants.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        let m = points.len();
        if m < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {m}")));
        }
        if points[0] != 0.0 || points[m - 1] != 1.0 {
            return Err(Error::InvalidGrid(
                "endpoints must be exactly 0 and 1".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidGrid("points must be finite".into()));
        }
        let h = points[1] - points[0];
        let uniform = points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12);
        Ok(TimeGrid {
            points: Arc::new(points),
            uniform,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Spacing of the first cell; the grid spacing when uniform.
    pub fn spacing(&self) -> f64 {
        self.points[1] - self.points[0]
    }
}

/// Composite trapezoid rule for `values` sampled on `grid`.
pub fn trapz(grid: &TimeGrid, values: &[f64]) -> f64 {
    let t = grid.points();
    let mut acc = 0.0;
    for i in 0..values.len() - 1 {
        acc += 0.5 * (values[i] + values[i + 1]) * (t[i + 1] - t[i]);
    }
    acc
}

/// Cumulative trapezoid: out[j] = integral of `values` from 0 to t[j].
pub fn cumtrapz(grid: &TimeGrid, values: &[f64]) -> Vec<f64> {
    let t = grid.points();
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..values.len() - 1 {
        acc += 0.5 * (values[i] + values[i + 1]) * (t[i + 1] - t[i]);
        out.push(acc);
    }
    out
}

/// L2 norm under the trapezoid rule.
pub fn l2_norm(grid: &TimeGrid, values: &[f64]) -> f64 {
    let t = grid.points();
    let mut acc = 0.0;
    for i in 0..values.len() - 1 {
        let a = values[i] * values[i];
        let b = values[i + 1] * values[i + 1];
        acc += 0.5 * (a + b) * (t[i + 1] - t[i]);
    }
    acc.max(0.0).sqrt()
}

/// L2 distance under the trapezoid rule.
pub fn l2_distance(grid: &TimeGrid, a: &[f64], b: &[f64]) -> f64 {
    let t = grid.points();
    let mut acc = 0.0;
    for i in 0..a.len() - 1 {
        let da = a[i] - b[i];
        let db = a[i + 1] - b[i + 1];
        acc += 0.5 * (da * da + db * db) * (t[i + 1] - t[i]);
    }
    acc.max(0.0).sqrt()
}

/// Piecewise-linear interpolation of `ys` sampled at monotone `xs`,
/// clamped at the ends.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    // Binary search for the cell with xs[j] <= x < xs[j+1].
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = (x - xs[lo]) / (xs[lo + 1] - xs[lo]);
    ys[lo] + w * (ys[lo + 1] - ys[lo])
}

/// Interpolation of `ys` sampled on the uniform unit grid, clamped to [0, 1].
pub fn interp_unit_uniform(ys: &[f64], x: f64) -> f64 {
    let m = ys.len();
    let pos = x.clamp(0.0, 1.0) * (m - 1) as f64;
    let cell = (pos.floor() as usize).min(m - 2);
    let w = pos - cell as f64;
    ys[cell] + w * (ys[cell + 1] - ys[cell])
}

/// Finite-difference derivative: central differences in the interior,
/// second-order one-sided at the endpoints (exact for quadratics on a
/// uniform grid).
pub fn derivative(grid: &TimeGrid, values: &[f64]) -> Vec<f64> {
    let t = grid.points();
    let m = values.len();
    let mut d = vec![0.0; m];
    for i in 1..m - 1 {
        d[i] = (values[i + 1] - values[i - 1]) / (t[i + 1] - t[i - 1]);
    }
    if grid.is_uniform() {
        let h = grid.spacing();
        // Difference-of-differences form cancels exactly on constants.
        d[0] = (4.0 * (values[1] - values[0]) - (values[2] - values[0])) / (2.0 * h);
        d[m - 1] =
            (4.0 * (values[m - 1] - values[m - 2]) - (values[m - 1] - values[m - 3])) / (2.0 * h);
    } else {
        d[0] = (values[1] - values[0]) / (t[1] - t[0]);
        d[m - 1] = (values[m - 1] - values[m - 2]) / (t[m - 1] - t[m - 2]);
    }
    d
}

/// A univariate function sampled on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "value length {} does not match grid length {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("values must be finite".into()));
        }
        Ok(SampledFunction { grid, values })
    }

    /// Evaluate at an arbitrary point by linear interpolation.
    pub fn eval(&self, t: f64) -> f64 {
        interp_linear(self.grid.points(), &self.values, t)
    }

    /// Composition f ∘ γ on the grid.
    pub fn compose_warp(&self, warp: &crate::warp::Warp) -> Result<SampledFunction> {
        if self.grid != *warp.grid() {
            return Err(Error::GridMismatch("compose_warp".into()));
        }
        let values = warp
            .values()
            .iter()
            .map(|&g| interp_linear(self.grid.points(), &self.values, g))
            .collect();
        SampledFunction::new(self.grid.clone(), values)
    }

    /// Cross-sectional (pointwise) mean of a set of functions.
    pub fn mean_of(funcs: &[&SampledFunction]) -> Result<SampledFunction> {
        let first = funcs
            .first()
            .ok_or_else(|| Error::InvalidInput("mean of empty set".into()))?;
        let m = first.grid.len();
        let mut mean = vec![0.0; m];
        for f in funcs {
            if f.grid != first.grid {
                return Err(Error::GridMismatch("mean_of".into()));
            }
            for (acc, v) in mean.iter_mut().zip(&f.values) {
                *acc += v;
            }
        }
        let n = funcs.len() as f64;
        mean.iter_mut().for_each(|v| *v /= n);
        SampledFunction::new(first.grid.clone(), mean)
    }

    pub fn l2_distance(&self, other: &SampledFunction) -> f64 {
        l2_distance(&self.grid, &self.values, &other.values)
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.grid, &self.values)
    }
}
