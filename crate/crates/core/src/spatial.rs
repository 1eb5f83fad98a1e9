//! Phase trace-variogram estimation and kriging of warping-function SRSFs
//! over spatial sites.
//!
//! The trace-variogram V(h) is half the expected squared L2 distance
//! between warp SRSFs at sites separated by distance h; it is invariant to
//! simultaneous warping, which is what lets the spatial penalty ignore the
//! cross-observation phase entirely.

use crate::error::{Error, Result};
use crate::grid::{self, TimeGrid};
use crate::warp::WarpSrsf;

/// Sites s_1..s_K in R^p (p = 2 or 3) with their Euclidean distance matrix.
#[derive(Debug, Clone)]
pub struct SpatialLayout {
    sites: Vec<Vec<f64>>,
    dim: usize,
    dist: Vec<f64>,
}

impl SpatialLayout {
    pub fn new(sites: Vec<Vec<f64>>) -> Result<Self> {
        let k = sites.len();
        if k == 0 {
            return Err(Error::InvalidInput("layout needs at least one site".into()));
        }
        let dim = sites[0].len();
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidInput(format!(
                "sites must live in R^2 or R^3, got dimension {dim}"
            )));
        }
        if sites.iter().any(|s| s.len() != dim) {
            return Err(Error::InvalidInput("sites have mixed dimensions".into()));
        }
        if sites.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("site coordinates must be finite".into()));
        }
        let mut dist = vec![0.0; k * k];
        for a in 0..k {
            for b in a + 1..k {
                let d = sites[a]
                    .iter()
                    .zip(&sites[b])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                dist[a * k + b] = d;
                dist[b * k + a] = d;
            }
        }
        Ok(SpatialLayout { sites, dim, dist })
    }

    pub fn count(&self) -> usize {
        self.sites.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sites(&self) -> &[Vec<f64>] {
        &self.sites
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.count() + b]
    }

    pub fn max_distance(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }
}

/// Distance bins (h_b − ε, h_b + ε] for the empirical variogram.
#[derive(Debug, Clone)]
pub struct VariogramBins {
    pub centers: Vec<f64>,
    pub half_width: f64,
}

impl VariogramBins {
    /// Default heuristic: ⌈√(K(K−1)/2)⌉ equal-width bins up to 0.75·d_max,
    /// with ε equal to half the bin width.
    pub fn default_for(layout: &SpatialLayout) -> Result<Self> {
        let k = layout.count();
        if k < 2 {
            return Err(Error::InvalidInput("need at least two sites".into()));
        }
        let pairs = k * (k - 1) / 2;
        let n_bins = (pairs as f64).sqrt().ceil() as usize;
        let h_max = 0.75 * layout.max_distance();
        if h_max <= 0.0 {
            return Err(Error::InvalidInput("all sites coincide".into()));
        }
        Ok(Self::equal_width(n_bins.max(1), h_max))
    }

    /// `n_bins` equal-width bins covering (0, h_max].
    pub fn equal_width(n_bins: usize, h_max: f64) -> Self {
        let w = h_max / n_bins as f64;
        let centers = (0..n_bins).map(|b| (b as f64 + 0.5) * w).collect();
        VariogramBins {
            centers,
            half_width: 0.5 * w,
        }
    }

    fn bin_of(&self, d: f64) -> Option<usize> {
        self.centers
            .iter()
            .position(|&c| d > c - self.half_width && d <= c + self.half_width)
    }
}

/// One populated variogram bin.
#[derive(Debug, Clone, serde::Serialize)]
pub struct VariogramBin {
    pub center: f64,
    pub count: usize,
    pub estimate: f64,
}

/// Binned estimates of the trace-variogram; empty bins are omitted.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EmpiricalVariogram {
    pub bins: Vec<VariogramBin>,
}

/// Shared binning kernel: half the mean squared L2 distance between the
/// value vectors of sites whose separation falls in each bin.
pub(crate) fn binned_half_sq_distances(
    grid: &TimeGrid,
    values: &[&[f64]],
    layout: &SpatialLayout,
    bins: &VariogramBins,
) -> Result<EmpiricalVariogram> {
    let k = values.len();
    if k != layout.count() {
        return Err(Error::InvalidInput(
            "value count does not match layout".into(),
        ));
    }
    if k < 2 {
        return Err(Error::InvalidInput("need at least two sites".into()));
    }
    let nb = bins.centers.len();
    let mut sums = vec![0.0; nb];
    let mut counts = vec![0usize; nb];
    for a in 0..k {
        for b in a + 1..k {
            if let Some(idx) = bins.bin_of(layout.distance(a, b)) {
                let d = grid::l2_distance(grid, values[a], values[b]);
                sums[idx] += d * d;
                counts[idx] += 1;
            }
        }
    }
    let bins_out = bins
        .centers
        .iter()
        .zip(sums.iter().zip(&counts))
        .filter(|(_, (_, &c))| c > 0)
        .map(|(&center, (&s, &c))| VariogramBin {
            center,
            count: c,
            estimate: 0.5 * s / c as f64,
        })
        .collect();
    Ok(EmpiricalVariogram { bins: bins_out })
}

/// Empirical phase trace-variogram of one observation's warp SRSFs.
pub fn empirical_phase_variogram(
    psis: &[WarpSrsf],
    layout: &SpatialLayout,
    bins: &VariogramBins,
) -> Result<EmpiricalVariogram> {
    let first = psis
        .first()
        .ok_or_else(|| Error::InvalidInput("no warp SRSFs".into()))?;
    let grid = first.grid().clone();
    let values: Vec<&[f64]> = psis.iter().map(|p| p.values()).collect();
    binned_half_sq_distances(&grid, &values, layout, bins)
}

/// Exponential variogram model V(h) = nugget + sill·(1 − e^{−h/range}),
/// the Matérn ν = 1/2 family.
#[derive(Debug, Clone, serde::Serialize)]
pub struct VariogramModel {
    pub nugget: f64,
    pub sill: f64,
    pub range: f64,
    /// Set when the empirical variogram was flat and the model degenerates
    /// to a constant.
    pub degenerate: bool,
}

impl VariogramModel {
    pub fn eval(&self, h: f64) -> f64 {
        self.nugget + self.sill * (1.0 - (-h / self.range).exp())
    }
}

/// Weighted least squares for (nugget, sill) at a fixed range; weights are
/// bin counts and both parameters are constrained nonnegative.
fn fit_linear_at_range(emp: &EmpiricalVariogram, range: f64) -> (f64, f64, f64) {
    let mut sw = 0.0;
    let mut sg = 0.0;
    let mut sgg = 0.0;
    let mut sv = 0.0;
    let mut sgv = 0.0;
    for b in &emp.bins {
        let w = b.count as f64;
        let g = 1.0 - (-b.center / range).exp();
        sw += w;
        sg += w * g;
        sgg += w * g * g;
        sv += w * b.estimate;
        sgv += w * g * b.estimate;
    }
    let sse = |n: f64, s: f64| -> f64 {
        emp.bins
            .iter()
            .map(|b| {
                let g = 1.0 - (-b.center / range).exp();
                let r = b.estimate - n - s * g;
                b.count as f64 * r * r
            })
            .sum()
    };
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    let det = sw * sgg - sg * sg;
    if det.abs() > 1e-300 {
        let n = (sv * sgg - sgv * sg) / det;
        let s = (sw * sgv - sg * sv) / det;
        if n >= 0.0 && s >= 0.0 {
            candidates.push((n, s));
        }
    }
    // Edge n = 0.
    if sgg > 0.0 {
        candidates.push((0.0, (sgv / sgg).max(0.0)));
    }
    // Edge s = 0: the best constant model.
    candidates.push(((sv / sw).max(0.0), 0.0));
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for (n, s) in candidates {
        let e = sse(n, s);
        if e < best.0 {
            best = (e, n, s);
        }
    }
    (best.1, best.2, best.0)
}

/// Fit the exponential model to an empirical variogram by weighted least
/// squares, profiling the linear parameters and scanning the range on a
/// log grid with golden-section refinement.
pub fn fit_variogram(emp: &EmpiricalVariogram) -> Result<VariogramModel> {
    if emp.bins.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "variogram fit needs at least 3 populated bins, got {}",
            emp.bins.len()
        )));
    }
    let vmax = emp.bins.iter().map(|b| b.estimate).fold(0.0, f64::max);
    let vmin = emp
        .bins
        .iter()
        .map(|b| b.estimate)
        .fold(f64::INFINITY, f64::min);
    let h_max = emp.bins.iter().map(|b| b.center).fold(0.0, f64::max);
    if vmax - vmin <= 1e-10 {
        let mean = emp.bins.iter().map(|b| b.estimate).sum::<f64>() / emp.bins.len() as f64;
        return Ok(VariogramModel {
            nugget: mean,
            sill: 0.0,
            range: h_max.max(1.0),
            degenerate: true,
        });
    }

    let lo = (1e-2 * h_max).ln();
    let hi = (1e2 * h_max).ln();
    let n_scan = 200;
    let mut best = (f64::INFINITY, 0.0, 0.0, h_max);
    for i in 0..=n_scan {
        let r = (lo + (hi - lo) * i as f64 / n_scan as f64).exp();
        let (n, s, e) = fit_linear_at_range(emp, r);
        if e < best.0 {
            best = (e, n, s, r);
        }
    }
    // Golden-section refinement around the best scanned range (in log space).
    let step = (hi - lo) / n_scan as f64;
    let mut a = best.3.ln() - step;
    let mut b = best.3.ln() + step;
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let sse_at = |lr: f64| fit_linear_at_range(emp, lr.exp()).2;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = sse_at(x1);
    let mut f2 = sse_at(x2);
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = sse_at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = sse_at(x2);
        }
    }
    let r = (0.5 * (a + b)).exp();
    let (n, s, e) = fit_linear_at_range(emp, r);
    let (nugget, sill, range) = if e <= best.0 {
        (n, s, r)
    } else {
        (best.1, best.2, best.3)
    };
    if sill <= 0.0 {
        // Best fit is a constant: treat as a degenerate field.
        return Ok(VariogramModel {
            nugget,
            sill: 0.0,
            range: h_max.max(1.0),
            degenerate: true,
        });
    }
    Ok(VariogramModel {
        nugget,
        sill,
        range,
        degenerate: false,
    })
}

/// Simplex-constrained kriging coefficients for one target site.
#[derive(Debug, Clone, serde::Serialize)]
pub struct KrigingWeights {
    pub target: usize,
    /// Component indices the weights refer to (all l ≠ target, in order).
    pub neighbors: Vec<usize>,
    pub values: Vec<f64>,
    /// Uniform fallback used for a degenerate spatial field.
    pub degenerate: bool,
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &s) in sorted.iter().enumerate() {
        acc += s;
        let t = (acc - 1.0) / (j + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Minimize the kriging variance proxy 2 Σ_l ζ_l V(|s_j − s_l|) −
/// Σ_a Σ_b ζ_a ζ_b V(|s_a − s_b|) over the simplex by projected gradient
/// descent from uniform weights.
pub fn solve_kriging_weights(
    model: &VariogramModel,
    layout: &SpatialLayout,
    target: usize,
) -> Result<KrigingWeights> {
    let k = layout.count();
    if target >= k {
        return Err(Error::InvalidParameter(format!(
            "target {target} out of range for {k} sites"
        )));
    }
    if k < 2 {
        return Err(Error::InvalidInput("kriging needs at least two sites".into()));
    }
    let neighbors: Vec<usize> = (0..k).filter(|&l| l != target).collect();
    let n = neighbors.len();
    let uniform = vec![1.0 / n as f64; n];
    if n == 1 {
        return Ok(KrigingWeights {
            target,
            neighbors,
            values: vec![1.0],
            degenerate: model.degenerate,
        });
    }
    if model.degenerate {
        return Ok(KrigingWeights {
            target,
            neighbors,
            values: uniform,
            degenerate: true,
        });
    }

    let c: Vec<f64> = neighbors
        .iter()
        .map(|&l| model.eval(layout.distance(target, l)))
        .collect();
    let mut g = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            g[a * n + b] = model.eval(layout.distance(neighbors[a], neighbors[b]));
        }
    }
    // Lipschitz bound for the gradient 2c − 2Gζ.
    let row_max = (0..n)
        .map(|a| (0..n).map(|b| g[a * n + b].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / (2.0 * row_max.max(1e-12));

    let mut zeta = uniform;
    let mut grad = vec![0.0; n];
    for _ in 0..200_000 {
        for a in 0..n {
            let gz: f64 = (0..n).map(|b| g[a * n + b] * zeta[b]).sum();
            grad[a] = 2.0 * c[a] - 2.0 * gz;
        }
        let mut next: Vec<f64> = zeta
            .iter()
            .zip(&grad)
            .map(|(z, gr)| z - step * gr)
            .collect();
        project_simplex(&mut next);
        let movement = zeta
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        zeta = next;
        if movement < 1e-10 {
            break;
        }
    }
    Ok(KrigingWeights {
        target,
        neighbors,
        values: zeta,
        degenerate: false,
    })
}

impl KrigingWeights {
    /// The objective the solver minimizes; exposed for verification.
    pub fn objective(&self, model: &VariogramModel, layout: &SpatialLayout) -> f64 {
        let n = self.neighbors.len();
        let mut lin = 0.0;
        for (a, &l) in self.neighbors.iter().enumerate() {
            lin += self.values[a] * model.eval(layout.distance(self.target, l));
        }
        let mut quad = 0.0;
        for a in 0..n {
            for b in 0..n {
                quad += self.values[a]
                    * self.values[b]
                    * model.eval(layout.distance(self.neighbors[a], self.neighbors[b]));
            }
        }
        2.0 * lin - quad
    }
}

/// Kriging combination ψ̃ = Σ_l ζ_l ψ_l, renormalized to unit norm.
/// `psis` is indexed by component; the entry at the target is ignored.
pub fn krige_psi(weights: &KrigingWeights, psis: &[WarpSrsf]) -> Result<WarpSrsf> {
    if weights.neighbors.is_empty() {
        return Err(Error::InvalidInput("no neighbors to krige from".into()));
    }
    let grid = psis
        .first()
        .ok_or_else(|| Error::InvalidInput("no warp SRSFs".into()))?
        .grid()
        .clone();
    let m = grid.len();
    let mut acc = vec![0.0; m];
    for (w, &l) in weights.values.iter().zip(&weights.neighbors) {
        let p = psis
            .get(l)
            .ok_or_else(|| Error::InvalidInput("neighbor index out of range".into()))?;
        for (a, v) in acc.iter_mut().zip(p.values()) {
            *a += w * v;
        }
    }
    WarpSrsf::new(grid, acc)
}
