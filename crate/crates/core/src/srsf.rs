//! Square-root slope functions: q = ḟ·|ḟ|^{-1/2}. The transform flattens
//! the elastic metric to the standard L2 metric, where warping acts by the
//! norm-preserving action q ⊙ γ = (q ∘ γ)·√γ̇.

use crate::error::{Error, Result};
use crate::grid::{self, SampledFunction, TimeGrid};
use crate::warp::Warp;

/// SRSF of a sampled function, with the anchor f(0) retained for inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct Srsf {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub anchor: f64,
}

fn slope_to_srsf(d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d / d.abs().sqrt()
    }
}

/// Forward transform Q(f) = ḟ·|ḟ|^{-1/2}, derivative by central differences
/// (second-order one-sided at the endpoints).
pub fn srsf_transform(f: &SampledFunction) -> Result<Srsf> {
    let d = grid::derivative(&f.grid, &f.values);
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite derivative".into()));
    }
    let values = d.iter().map(|&v| slope_to_srsf(v)).collect();
    Ok(Srsf {
        grid: f.grid.clone(),
        values,
        anchor: f.values[0],
    })
}

/// Inverse transform f(t) = f(0) + ∫₀ᵗ q|q|.
pub fn srsf_inverse(q: &Srsf) -> SampledFunction {
    let integrand: Vec<f64> = q.values.iter().map(|&v| v * v.abs()).collect();
    let cum = grid::cumtrapz(&q.grid, &integrand);
    let values = cum.iter().map(|c| q.anchor + c).collect();
    SampledFunction {
        grid: q.grid.clone(),
        values,
    }
}

/// Warping action values (q ∘ γ)·√γ̇ with γ̇ by finite differences.
pub(crate) fn warp_action_values(grid: &TimeGrid, q: &[f64], warp: &Warp) -> Vec<f64> {
    let dg = grid::derivative(grid, warp.values());
    warp.values()
        .iter()
        .zip(&dg)
        .map(|(&g, &d)| grid::interp_linear(grid.points(), q, g) * d.max(0.0).sqrt())
        .collect()
}

/// Group action q ⊙ γ = (q ∘ γ)·√γ̇.
pub fn warp_action(q: &Srsf, warp: &Warp) -> Result<Srsf> {
    if q.grid != *warp.grid() {
        return Err(Error::GridMismatch("warp_action".into()));
    }
    let values = warp_action_values(&q.grid, &q.values, warp);
    Ok(Srsf {
        grid: q.grid.clone(),
        values,
        anchor: q.anchor,
    })
}

impl Srsf {
    pub fn l2_norm(&self) -> f64 {
        grid::l2_norm(&self.grid, &self.values)
    }

    pub fn l2_distance(&self, other: &Srsf) -> f64 {
        grid::l2_distance(&self.grid, &self.values, &other.values)
    }
}

/// Vector-valued SRSF of a multivariate function F: Q(F) = Ḟ·|Ḟ|^{-1/2}
/// with |·| the Euclidean norm in R^K. Used by universal registration.
#[derive(Debug, Clone)]
pub struct MultiSrsf {
    pub grid: TimeGrid,
    pub channels: Vec<Vec<f64>>,
    pub anchors: Vec<f64>,
}

/// Build the vector SRSF of the component functions of one observation.
pub fn multivariate_srsf(funcs: &[&SampledFunction]) -> Result<MultiSrsf> {
    let first = funcs
        .first()
        .ok_or_else(|| Error::InvalidInput("empty component list".into()))?;
    let g = first.grid.clone();
    let m = g.len();
    let mut derivs = Vec::with_capacity(funcs.len());
    for f in funcs {
        if f.grid != g {
            return Err(Error::GridMismatch("multivariate_srsf".into()));
        }
        let d = grid::derivative(&g, &f.values);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite derivative".into()));
        }
        derivs.push(d);
    }
    let mut channels = vec![vec![0.0; m]; funcs.len()];
    for t in 0..m {
        let norm: f64 = derivs.iter().map(|d| d[t] * d[t]).sum::<f64>().sqrt();
        if norm > 0.0 {
            let scale = norm.sqrt();
            for (k, d) in derivs.iter().enumerate() {
                channels[k][t] = d[t] / scale;
            }
        }
    }
    Ok(MultiSrsf {
        grid: g,
        channels,
        anchors: funcs.iter().map(|f| f.values[0]).collect(),
    })
}

impl MultiSrsf {
    /// Componentwise action with a common warp and shared √γ̇ factor.
    pub fn warp_action(&self, warp: &Warp) -> Result<MultiSrsf> {
        if self.grid != *warp.grid() {
            return Err(Error::GridMismatch("MultiSrsf::warp_action".into()));
        }
        let channels = self
            .channels
            .iter()
            .map(|q| warp_action_values(&self.grid, q, warp))
            .collect();
        Ok(MultiSrsf {
            grid: self.grid.clone(),
            channels,
            anchors: self.anchors.clone(),
        })
    }

    /// Euclidean L2 norm over all channels.
    pub fn l2_norm(&self) -> f64 {
        let sq: f64 = self
            .channels
            .iter()
            .map(|c| {
                let n = grid::l2_norm(&self.grid, c);
                n * n
            })
            .sum();
        sq.sqrt()
    }
}
