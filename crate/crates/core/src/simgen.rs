//! Seeded generators for the two simulation settings: Matérn-correlated
//! amplitudes and noise, beta-CDF warps, correlated-uniform cross-component
//! phase, B-spline templates, and the grid smoother used for low-SNR runs.
//!
//! All randomness flows from one seed through fixed ChaCha substreams, so
//! runs are bit-reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::grid::{self, SampledFunction, TimeGrid};
use crate::registration::MvSample;
use crate::spatial::SpatialLayout;
use crate::warp::Warp;

/// Substream tags for seed derivation.
pub mod streams {
    pub const SITES: u64 = 1;
    pub const AMPLITUDE: u64 = 2;
    pub const ALPHA: u64 = 3;
    pub const XI: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const SPLINE: u64 = 6;
}

/// Independent generator for substream `tag` of `seed`.
pub fn substream(seed: u64, tag: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Matérn covariance with smoothness 1/2: σ²·exp(−d/ℓ).
pub fn matern_cov(d: f64, sigma2: f64, ell: f64) -> Result<f64> {
    if ell <= 0.0 {
        return Err(Error::InvalidParameter("range must be positive".into()));
    }
    if d < 0.0 {
        return Err(Error::InvalidParameter("distance must be nonnegative".into()));
    }
    Ok(sigma2 * (-d / ell).exp())
}

/// Lower-triangular Cholesky factor with a 1e-10 diagonal jitter retry.
fn cholesky(mat: &[f64], k: usize) -> Result<Vec<f64>> {
    let attempt = |a: &[f64]| -> Option<Vec<f64>> {
        let mut l = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let mut s = a[i * k + j];
                for r in 0..j {
                    s -= l[i * k + r] * l[j * k + r];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[i * k + j] = s.sqrt();
                } else {
                    l[i * k + j] = s / l[j * k + j];
                }
            }
        }
        Some(l)
    };
    if let Some(l) = attempt(mat) {
        return Ok(l);
    }
    let mut jittered = mat.to_vec();
    for i in 0..k {
        jittered[i * k + i] += 1e-10;
    }
    attempt(&jittered).ok_or(Error::NonPositiveDefinite)
}

/// Draw from N(mean, Σ) given the Cholesky factor of Σ.
fn mvn_draw(chol: &[f64], k: usize, mean: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let eps: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    (0..k)
        .map(|i| {
            let mut v = mean;
            for j in 0..=i {
                v += chol[i * k + j] * eps[j];
            }
            v
        })
        .collect()
}

fn matern_chol(layout: &SpatialLayout, sigma2: f64, ell: f64) -> Result<Vec<f64>> {
    let k = layout.count();
    let mut cov = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            cov[a * k + b] = matern_cov(layout.distance(a, b), sigma2, ell)?;
        }
    }
    cholesky(&cov, k)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Correlated uniform sample on [−bound, bound]^K: a Matérn-correlated
/// Gaussian vector mapped through the standard normal CDF and rescaled.
pub fn correlated_uniform(
    layout: &SpatialLayout,
    bound: f64,
    ell: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    if bound < 0.0 {
        return Err(Error::InvalidParameter("bound must be nonnegative".into()));
    }
    let k = layout.count();
    let chol = matern_chol(layout, 1.0, ell)?;
    let z = mvn_draw(&chol, k, 0.0, rng);
    Ok(z
        .iter()
        .map(|&v| (2.0 * normal_cdf(v) - 1.0) * bound)
        .collect())
}

/// CDF of Beta(1, e^b) sampled on the grid: γ(t) = 1 − (1−t)^{e^b}.
pub fn beta_cdf_warp(grid: &TimeGrid, b: f64) -> Result<Warp> {
    let beta = b.exp();
    let values: Vec<f64> = grid
        .points()
        .iter()
        .map(|&t| -f64::exp_m1(beta * f64::ln_1p(-t)))
        .collect();
    let (warp, _) = Warp::new_repaired(grid.clone(), values)?;
    Ok(warp)
}

/// Simulation configuration; constructors carry the settings' defaults.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub setting: u8,
    pub n: usize,
    pub k: usize,
    /// Scale of cross-observation phase: z_i ~ Unif[−Z, Z].
    pub z: f64,
    /// Scale of cross-component phase: b ~ correlated uniform on [−B, B].
    pub b: f64,
    pub sigma_a: f64,
    pub sigma_e: f64,
    pub m: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn setting1() -> Self {
        SimConfig {
            setting: 1,
            n: 20,
            k: 20,
            z: 0.5,
            b: 0.25,
            sigma_a: 1.0,
            sigma_e: 0.5,
            m: 201,
            seed: 0,
        }
    }

    pub fn setting2(sigma_e: f64) -> Self {
        SimConfig {
            setting: 2,
            n: 20,
            k: 16,
            z: 0.5,
            b: 0.0,
            sigma_a: 2.0,
            sigma_e,
            m: 201,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.setting != 1 && self.setting != 2 {
            return Err(Error::InvalidParameter(format!(
                "setting must be 1 or 2, got {}",
                self.setting
            )));
        }
        if self.z < 0.0 || self.b < 0.0 {
            return Err(Error::InvalidParameter("Z and B must be nonnegative".into()));
        }
        if self.sigma_a <= 0.0 || self.sigma_e <= 0.0 {
            return Err(Error::InvalidParameter("sigmas must be positive".into()));
        }
        if self.m < 3 {
            return Err(Error::InvalidParameter("grid needs at least 3 points".into()));
        }
        if self.n < 1 || self.k < 2 {
            return Err(Error::InvalidParameter("need n >= 1, K >= 2".into()));
        }
        if self.setting == 2 && self.k > ELECTRODES_16.len() {
            return Err(Error::InvalidParameter(format!(
                "setting 2 supports at most {} electrode sites",
                ELECTRODES_16.len()
            )));
        }
        Ok(())
    }

    pub fn low_snr(&self) -> bool {
        self.sigma_e >= 1.0
    }
}

/// A generated panel together with its latent truth.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub sample: MvSample,
    pub templates: Vec<SampledFunction>,
    pub alpha: Vec<Warp>,
    pub xi: Vec<Vec<Warp>>,
    pub gamma: Vec<Vec<Warp>>,
    pub noise: Vec<Vec<Vec<f64>>>,
    pub config: SimConfig,
}

/// Approximate standard 10-20 positions of a 16-channel montage on the
/// unit sphere, as (name, polar angle from vertex, azimuth from nasion),
/// both in degrees.
const ELECTRODES_16: [(&str, f64, f64); 16] = [
    ("Fp1", 90.0, -18.0),
    ("Fp2", 90.0, 18.0),
    ("F3", 60.0, -39.0),
    ("F4", 60.0, 39.0),
    ("C3", 45.0, -90.0),
    ("C4", 45.0, 90.0),
    ("P3", 60.0, -141.0),
    ("P4", 60.0, 141.0),
    ("O1", 90.0, -162.0),
    ("O2", 90.0, 162.0),
    ("F7", 90.0, -54.0),
    ("F8", 90.0, 54.0),
    ("T7", 90.0, -90.0),
    ("T8", 90.0, 90.0),
    ("Fz", 45.0, 0.0),
    ("Pz", 45.0, 180.0),
];

/// The bundled 16-site electrode montage (names and 3D coordinates).
pub fn electrode_montage(k: usize) -> (Vec<String>, Vec<Vec<f64>>) {
    let take = k.min(ELECTRODES_16.len());
    let mut names = Vec::with_capacity(take);
    let mut coords = Vec::with_capacity(take);
    for (name, theta_deg, phi_deg) in ELECTRODES_16.iter().take(take) {
        let theta = theta_deg.to_radians();
        let phi = phi_deg.to_radians();
        names.push((*name).to_string());
        coords.push(vec![
            theta.sin() * phi.sin(),
            theta.sin() * phi.cos(),
            theta.cos(),
        ]);
    }
    (names, coords)
}

/// Cubic (order-4) B-spline basis of `n_basis` functions on a uniform
/// clamped knot sequence over [0, 1], evaluated on the grid.
pub fn bspline_basis(grid: &TimeGrid, n_basis: usize, order: usize) -> Result<Vec<Vec<f64>>> {
    if n_basis < order {
        return Err(Error::InvalidParameter(
            "need at least `order` basis functions".into(),
        ));
    }
    let interior = n_basis - order;
    let mut knots = vec![0.0; order];
    for i in 1..=interior {
        knots.push(i as f64 / (interior + 1) as f64);
    }
    knots.extend(std::iter::repeat_n(1.0, order));

    let m = grid.len();
    let mut basis = vec![vec![0.0; m]; n_basis];
    for (ti, &t) in grid.points().iter().enumerate() {
        // Knot span containing t (clamped so t = 1 lands in the last one).
        let mut span = n_basis - 1;
        if t < 1.0 {
            span = order - 1;
            while span < n_basis - 1 && t >= knots[span + 1] {
                span += 1;
            }
        }
        // de Boor's basis-function recursion over the active window.
        let mut vals = vec![0.0; order];
        vals[0] = 1.0;
        let mut left = vec![0.0; order];
        let mut right = vec![0.0; order];
        for j in 1..order {
            left[j] = t - knots[span + 1 - j];
            right[j] = knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { vals[r] / denom } else { 0.0 };
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }
        for (r, &v) in vals.iter().enumerate() {
            basis[span + 1 - order + r][ti] = v;
        }
    }
    Ok(basis)
}

/// Generate a panel with latent truth for the configured setting.
pub fn gen(cfg: &SimConfig) -> Result<SimTruth> {
    cfg.validate()?;
    let grid = TimeGrid::uniform(cfg.m)?;

    // Sites.
    let (labels, sites) = match cfg.setting {
        1 => {
            let mut rng = substream(cfg.seed, streams::SITES);
            let sites: Vec<Vec<f64>> = (0..cfg.k)
                .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
                .collect();
            (None, sites)
        }
        _ => {
            let (names, coords) = electrode_montage(cfg.k);
            (Some(names), coords)
        }
    };
    let layout = SpatialLayout::new(sites)?;
    let ell = 0.5 * layout.max_distance();
    if ell <= 0.0 {
        return Err(Error::InvalidInput("degenerate site layout".into()));
    }

    // Templates.
    let templates: Vec<SampledFunction> = match cfg.setting {
        1 => {
            let mut rng = substream(cfg.seed, streams::AMPLITUDE);
            let chol = matern_chol(&layout, cfg.sigma_a * cfg.sigma_a, ell)?;
            let a1 = mvn_draw(&chol, cfg.k, 3.0, &mut rng);
            let a2 = mvn_draw(&chol, cfg.k, 3.0, &mut rng);
            (0..cfg.k)
                .map(|j| {
                    let values = grid
                        .points()
                        .iter()
                        .map(|&t| {
                            a1[j] * (-100.0 * (t - 1.0 / 3.0).powi(2)).exp()
                                + a2[j] * (-100.0 * (t - 2.0 / 3.0).powi(2)).exp()
                        })
                        .collect();
                    SampledFunction::new(grid.clone(), values)
                })
                .collect::<Result<_>>()?
        }
        _ => {
            let mut rng = substream(cfg.seed, streams::SPLINE);
            let n_basis = 10;
            let basis = bspline_basis(&grid, n_basis, 4)?;
            let chol = matern_chol(&layout, cfg.sigma_a * cfg.sigma_a, ell)?;
            let betas: Vec<Vec<f64>> = (0..n_basis)
                .map(|_| mvn_draw(&chol, cfg.k, 0.0, &mut rng))
                .collect();
            (0..cfg.k)
                .map(|j| {
                    let mut values = vec![0.0; cfg.m];
                    for (b, beta) in basis.iter().zip(&betas) {
                        for (v, &bv) in values.iter_mut().zip(b) {
                            *v += beta[j] * bv;
                        }
                    }
                    SampledFunction::new(grid.clone(), values)
                })
                .collect::<Result<_>>()?
        }
    };

    // Cross-observation warps.
    let mut alpha_rng = substream(cfg.seed, streams::ALPHA);
    let alpha: Vec<Warp> = (0..cfg.n)
        .map(|_| {
            let z = if cfg.z > 0.0 {
                alpha_rng.gen_range(-cfg.z..=cfg.z)
            } else {
                0.0
            };
            beta_cdf_warp(&grid, z)
        })
        .collect::<Result<_>>()?;

    // Spatially correlated cross-component warps.
    let mut xi_rng = substream(cfg.seed, streams::XI);
    let xi: Vec<Vec<Warp>> = (0..cfg.n)
        .map(|_| {
            let b = correlated_uniform(&layout, cfg.b, ell, &mut xi_rng)?;
            b.iter().map(|&bj| beta_cdf_warp(&grid, bj)).collect()
        })
        .collect::<Result<_>>()?;

    // Composed phase γ_ij = ξ_ij ∘ α_i.
    let gamma: Vec<Vec<Warp>> = xi
        .iter()
        .zip(&alpha)
        .map(|(row, a)| row.iter().map(|x| x.compose(a)).collect())
        .collect::<Result<_>>()?;

    // Pointwise Matérn-correlated noise, independent across i and t.
    let mut noise_rng = substream(cfg.seed, streams::NOISE);
    let noise_chol = matern_chol(&layout, cfg.sigma_e * cfg.sigma_e, ell)?;
    let mut noise = vec![vec![vec![0.0; cfg.m]; cfg.k]; cfg.n];
    for row in noise.iter_mut() {
        for t in 0..cfg.m {
            let e = mvn_draw(&noise_chol, cfg.k, 0.0, &mut noise_rng);
            for (series, ej) in row.iter_mut().zip(&e) {
                series[t] = *ej;
            }
        }
    }

    // Emit f = (μ + e) ∘ (ξ ∘ α).
    let mut funcs = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let mut row = Vec::with_capacity(cfg.k);
        for j in 0..cfg.k {
            let prewarp: Vec<f64> = templates[j]
                .values
                .iter()
                .zip(&noise[i][j])
                .map(|(a, b)| a + b)
                .collect();
            let pre = SampledFunction::new(grid.clone(), prewarp)?;
            row.push(pre.compose_warp(&gamma[i][j])?);
        }
        funcs.push(row);
    }
    let sample = MvSample::new(funcs, layout, labels)?;

    Ok(SimTruth {
        sample,
        templates,
        alpha,
        xi,
        gamma,
        noise,
        config: *cfg,
    })
}

/// Discrete smoothing-spline analogue: minimizes ‖g − f‖² plus a scaled
/// squared-second-difference penalty; `strength` 0 is the identity.
pub fn presmooth(f: &SampledFunction, strength: f64) -> Result<SampledFunction> {
    if strength < 0.0 {
        return Err(Error::InvalidParameter(
            "smoothing strength must be nonnegative".into(),
        ));
    }
    if strength == 0.0 {
        return Ok(f.clone());
    }
    let m = f.grid.len();
    let h = f.grid.spacing();
    let c = strength / (h * h * h * h);

    // Assemble I + c·D₂ᵀD₂ (pentadiagonal SPD).
    let mut diag = vec![1.0; m];
    let mut off1 = vec![0.0; m - 1];
    let mut off2 = vec![0.0; m - 2];
    let co = [1.0, -2.0, 1.0];
    for r in 0..m - 2 {
        for a in 0..3 {
            for b in a..3 {
                let v = c * co[a] * co[b];
                match b - a {
                    0 => diag[r + a] += v,
                    1 => off1[r + a] += v,
                    _ => off2[r + a] += v,
                }
            }
        }
    }

    // Banded Cholesky, bandwidth 2.
    let mut ld = vec![0.0; m];
    let mut l1 = vec![0.0; m.saturating_sub(1)];
    let mut l2 = vec![0.0; m.saturating_sub(2)];
    for i in 0..m {
        if i >= 2 {
            l2[i - 2] = off2[i - 2] / ld[i - 2];
        }
        if i >= 1 {
            let sub = if i >= 2 { l2[i - 2] * l1[i - 2] } else { 0.0 };
            l1[i - 1] = (off1[i - 1] - sub) / ld[i - 1];
        }
        let mut d = diag[i];
        if i >= 1 {
            d -= l1[i - 1] * l1[i - 1];
        }
        if i >= 2 {
            d -= l2[i - 2] * l2[i - 2];
        }
        if d <= 0.0 {
            return Err(Error::InvalidInput("smoother system not positive definite".into()));
        }
        ld[i] = d.sqrt();
    }

    // Solve L y = f, then Lᵀ g = y.
    let mut y = vec![0.0; m];
    for i in 0..m {
        let mut v = f.values[i];
        if i >= 1 {
            v -= l1[i - 1] * y[i - 1];
        }
        if i >= 2 {
            v -= l2[i - 2] * y[i - 2];
        }
        y[i] = v / ld[i];
    }
    let mut out = vec![0.0; m];
    for i in (0..m).rev() {
        let mut v = y[i];
        if i + 1 < m {
            v -= l1[i] * out[i + 1];
        }
        if i + 2 < m {
            v -= l2[i] * out[i + 2];
        }
        out[i] = v / ld[i];
    }
    SampledFunction::new(f.grid.clone(), out)
}

/// Random smooth function from a short Fourier series; test/benchmark aid.
pub fn smooth_function(grid: &TimeGrid, amp: f64, modes: usize, rng: &mut ChaCha12Rng) -> SampledFunction {
    let coefs: Vec<(f64, f64)> = (0..modes)
        .map(|_| {
            (
                amp * rng.sample::<f64, _>(StandardNormal),
                amp * rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect();
    let values = grid
        .points()
        .iter()
        .map(|&t| {
            coefs
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| {
                    let w = 2.0 * std::f64::consts::PI * (k + 1) as f64 * t;
                    (a * w.sin() + b * w.cos()) / (k + 1) as f64
                })
                .sum()
        })
        .collect();
    SampledFunction::new(grid.clone(), values).expect("finite by construction")
}

/// Random smooth warp with derivative bounded away from 0 and ∞.
pub fn smooth_warp(grid: &TimeGrid, roughness: f64, rng: &mut ChaCha12Rng) -> Warp {
    let gfun = smooth_function(grid, roughness, 3, rng);
    let expd: Vec<f64> = gfun.values.iter().map(|&v| v.clamp(-1.2, 1.2).exp()).collect();
    let mut cum = grid::cumtrapz(grid, &expd);
    let total = cum[cum.len() - 1];
    cum.iter_mut().for_each(|v| *v /= total);
    Warp::new_repaired(grid.clone(), cum)
        .expect("positive integrand yields a valid warp")
        .0
}
