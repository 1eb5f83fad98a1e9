//! Warping functions γ ∈ Γ (monotone, endpoint-preserving bijections of
//! [0, 1]) and their square-root slope representatives ψ = √γ̇, which live
//! on the positive orthant of the unit sphere in L2.

use crate::error::{Error, Result};
use crate::grid::{self, TimeGrid};

/// A monotone, endpoint-preserving time warp sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Warp {
    grid: TimeGrid,
    values: Vec<f64>,
}

/// Pool-adjacent-violators projection onto non-decreasing sequences.
fn isotonic(values: &mut [f64]) {
    let n = values.len();
    // (mean, count) blocks.
    let mut means: Vec<f64> = Vec::with_capacity(n);
    let mut counts: Vec<usize> = Vec::with_capacity(n);
    for &v in values.iter() {
        means.push(v);
        counts.push(1);
        while means.len() > 1 && means[means.len() - 2] > means[means.len() - 1] {
            let m2 = means.pop().unwrap();
            let c2 = counts.pop().unwrap();
            let m1 = *means.last().unwrap();
            let c1 = *counts.last().unwrap();
            let merged = (m1 * c1 as f64 + m2 * c2 as f64) / (c1 + c2) as f64;
            *means.last_mut().unwrap() = merged;
            *counts.last_mut().unwrap() = c1 + c2;
        }
    }
    let mut idx = 0;
    for (m, c) in means.iter().zip(&counts) {
        for _ in 0..*c {
            values[idx] = *m;
            idx += 1;
        }
    }
}

/// Force a non-decreasing sequence in [0, 1] with exact endpoints to be
/// strictly increasing, nudging ties by one ulp where needed.
fn strictify(values: &mut [f64]) -> Result<()> {
    let m = values.len();
    values[0] = 0.0;
    values[m - 1] = 1.0;
    for i in 1..m - 1 {
        if values[i] <= values[i - 1] {
            values[i] = values[i - 1].next_up();
        }
    }
    for i in (1..m - 1).rev() {
        if values[i] >= values[i + 1] {
            values[i] = values[i + 1].next_down();
        }
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidWarp(
            "could not repair monotonicity: too many coincident values".into(),
        ));
    }
    Ok(())
}

impl Warp {
    /// Strict constructor: values must already satisfy the invariants.
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidWarp("length mismatch with grid".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWarp("non-finite values".into()));
        }
        if values[0] != 0.0 || values[values.len() - 1] != 1.0 {
            return Err(Error::InvalidWarp("endpoints must be exactly 0 and 1".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidWarp("values must be strictly increasing".into()));
        }
        Ok(Warp { grid, values })
    }

    /// Repairing constructor: clamps into [0, 1], projects onto monotone
    /// sequences (pool-adjacent-violators) and nudges ties apart. The flag
    /// reports whether the input actually violated the invariants.
    pub fn new_repaired(grid: TimeGrid, mut values: Vec<f64>) -> Result<(Self, bool)> {
        if values.len() != grid.len() {
            return Err(Error::InvalidWarp("length mismatch with grid".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWarp("non-finite values".into()));
        }
        let m = values.len();
        let violated = values[0] != 0.0
            || values[m - 1] != 1.0
            || values.iter().any(|&v| !(0.0..=1.0).contains(&v))
            || values.windows(2).any(|w| !(w[1] > w[0]));
        if violated {
            for v in values.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
            isotonic(&mut values);
            strictify(&mut values)?;
        }
        Ok((Warp { grid, values }, violated))
    }

    pub fn identity(grid: TimeGrid) -> Self {
        let values = grid.points().to_vec();
        Warp { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_identity(&self) -> bool {
        self.values == self.grid.points()
    }

    pub fn eval(&self, t: f64) -> f64 {
        grid::interp_linear(self.grid.points(), &self.values, t)
    }

    /// Composition self ∘ inner, i.e. t ↦ self(inner(t)).
    pub fn compose(&self, inner: &Warp) -> Result<Warp> {
        Ok(self.compose_flagged(inner)?.0)
    }

    /// Composition that also reports whether monotonicity repair fired.
    pub fn compose_flagged(&self, inner: &Warp) -> Result<(Warp, bool)> {
        if self.grid != inner.grid {
            return Err(Error::GridMismatch("compose".into()));
        }
        // Identity is neutral exactly.
        if self.is_identity() {
            return Ok((inner.clone(), false));
        }
        if inner.is_identity() {
            return Ok((self.clone(), false));
        }
        let values: Vec<f64> = inner
            .values
            .iter()
            .map(|&g| grid::interp_linear(self.grid.points(), &self.values, g))
            .collect();
        let (warp, repaired) = Warp::new_repaired(self.grid.clone(), values)?;
        if repaired {
            log::debug!("warp composition required monotonicity repair");
        }
        Ok((warp, repaired))
    }

    /// Group inverse γ⁻¹ on the grid.
    pub fn invert(&self) -> Result<Warp> {
        let values: Vec<f64> = self
            .grid
            .points()
            .iter()
            .map(|&t| grid::interp_linear(&self.values, self.grid.points(), t))
            .collect();
        let (warp, repaired) = Warp::new_repaired(self.grid.clone(), values)?;
        if repaired {
            log::debug!("warp inversion required monotonicity repair");
        }
        Ok(warp)
    }

    /// SRSF of the warp: ψ = √γ̇, renormalized to unit L2 norm.
    pub fn to_psi(&self) -> Result<WarpSrsf> {
        let d = grid::derivative(&self.grid, &self.values);
        let raw: Vec<f64> = d.iter().map(|&v| v.max(0.0).sqrt()).collect();
        let norm = grid::l2_norm(&self.grid, &raw);
        if (norm - 1.0).abs() > 1e-3 {
            log::warn!("warp SRSF norm {norm:.6} deviates from 1 before renormalization");
        }
        WarpSrsf::new(self.grid.clone(), raw)
    }

    pub fn sup_distance(&self, other: &Warp) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// SRSF of a warping function: nonnegative with unit L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpSrsf {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl WarpSrsf {
    /// Constructor normalizes to unit norm; small negative values from
    /// roundoff are clamped to zero.
    pub fn new(grid: TimeGrid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidWarp("length mismatch with grid".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWarp("non-finite values".into()));
        }
        if values.iter().any(|&v| v < -1e-9) {
            return Err(Error::InvalidWarp("warp SRSF must be nonnegative".into()));
        }
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let norm = grid::l2_norm(&grid, &values);
        if norm <= 0.0 {
            return Err(Error::InvalidWarp("warp SRSF has zero norm".into()));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(WarpSrsf { grid, values })
    }

    /// ψ ≡ 1, the SRSF of the identity warp.
    pub fn identity(grid: TimeGrid) -> Self {
        let values = vec![1.0; grid.len()];
        WarpSrsf::new(grid, values).expect("constant one is a valid warp SRSF")
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Inverse map to the warp: γ(t) = ∫₀ᵗ ψ², rescaled so γ(1) = 1.
    pub fn to_warp(&self) -> Result<Warp> {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        let mut cum = grid::cumtrapz(&self.grid, &sq);
        let total = cum[cum.len() - 1];
        if total <= 0.0 {
            return Err(Error::InvalidWarp("warp SRSF integrates to zero".into()));
        }
        cum.iter_mut().for_each(|v| *v /= total);
        let (warp, _) = Warp::new_repaired(self.grid.clone(), cum)?;
        Ok(warp)
    }

    /// Right action ψ ⊙ α = (ψ ∘ α)·√α̇, renormalized.
    pub fn warped_by(&self, alpha: &Warp) -> Result<WarpSrsf> {
        if self.grid != *alpha.grid() {
            return Err(Error::GridMismatch("warped_by".into()));
        }
        let dg = grid::derivative(&self.grid, alpha.values());
        let values: Vec<f64> = alpha
            .values()
            .iter()
            .zip(&dg)
            .map(|(&g, &d)| {
                grid::interp_linear(self.grid.points(), &self.values, g) * d.max(0.0).sqrt()
            })
            .collect();
        WarpSrsf::new(self.grid.clone(), values)
    }

    /// Pointwise mean of a set of warp SRSFs, renormalized to unit norm.
    pub fn mean(psis: &[WarpSrsf]) -> Result<WarpSrsf> {
        let first = psis
            .first()
            .ok_or_else(|| Error::InvalidParameter("mean of empty set".into()))?;
        let m = first.grid.len();
        let mut acc = vec![0.0; m];
        for p in psis {
            if p.grid != first.grid {
                return Err(Error::GridMismatch("WarpSrsf::mean".into()));
            }
            for (a, v) in acc.iter_mut().zip(&p.values) {
                *a += v;
            }
        }
        let n = psis.len() as f64;
        acc.iter_mut().for_each(|v| *v /= n);
        WarpSrsf::new(first.grid.clone(), acc)
    }

    pub fn l2_distance(&self, other: &WarpSrsf) -> f64 {
        grid::l2_distance(&self.grid, &self.values, &other.values)
    }
}

/// Extrinsic distance on Γ: the L2 distance between warp SRSFs.
pub fn extrinsic_phase_distance(a: &Warp, b: &Warp) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch("extrinsic_phase_distance".into()));
    }
    Ok(a.to_psi()?.l2_distance(&b.to_psi()?))
}
