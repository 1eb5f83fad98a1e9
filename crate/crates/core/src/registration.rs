//! Multiple registration with template estimation, plus the componentwise
//! and universal (common-phase) baselines for multivariate panels.
//!
//! The template update is the cross-sectional mean of the warped SRSFs
//! under the solver-consistent discretization, which is the exact inner
//! minimizer of the alignment objective for fixed warps; together with the
//! exact DP step this makes the recorded cost trace non-increasing.

use rayon::prelude::*;

use crate::alignment::{self, AlignResult, DpConfig};
use crate::error::{Error, Result};
use crate::grid::{self, SampledFunction, TimeGrid};
use crate::spatial::SpatialLayout;
use crate::srsf::{self, Srsf};
use crate::warp::{Warp, WarpSrsf};

/// Iteration controls for multiple registration.
#[derive(Debug, Clone)]
pub struct RegConfig {
    pub dp: DpConfig,
    pub max_iters: usize,
    /// Relative template-change tolerance.
    pub tol: f64,
}

impl Default for RegConfig {
    fn default() -> Self {
        RegConfig {
            dp: DpConfig::default(),
            max_iters: 50,
            tol: 1e-4,
        }
    }
}

/// Result of univariate multiple registration.
#[derive(Debug, Clone)]
pub struct MultipleRegResult {
    pub template: Srsf,
    pub warps: Vec<Warp>,
    pub aligned: Vec<Srsf>,
    pub iterations: usize,
    pub cost_trace: Vec<f64>,
    pub converged: bool,
}

/// Result of universal registration: one warp per observation.
#[derive(Debug, Clone)]
pub struct UniversalRegResult {
    /// Channels of the vector-valued SRSF template, one per component.
    pub template_channels: Vec<Srsf>,
    pub warps: Vec<Warp>,
    /// Per-(i, j) univariate aligned SRSFs for metric comparability.
    pub aligned: Vec<Vec<Srsf>>,
    pub iterations: usize,
    pub cost_trace: Vec<f64>,
    pub converged: bool,
}

/// The n×K panel of component functions with its spatial layout.
#[derive(Debug, Clone)]
pub struct MvSample {
    pub funcs: Vec<Vec<SampledFunction>>,
    pub layout: SpatialLayout,
    pub labels: Option<Vec<String>>,
}

impl MvSample {
    pub fn new(
        funcs: Vec<Vec<SampledFunction>>,
        layout: SpatialLayout,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = funcs.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty sample".into()));
        }
        let k = funcs[0].len();
        if k == 0 || k != layout.count() {
            return Err(Error::InvalidInput(format!(
                "layout has {} sites but observations have {k} components",
                layout.count()
            )));
        }
        let g = funcs[0][0].grid.clone();
        for row in &funcs {
            if row.len() != k {
                return Err(Error::InvalidInput("ragged component counts".into()));
            }
            for f in row {
                if f.grid != g {
                    return Err(Error::GridMismatch(
                        "all functions in a panel must share one grid".into(),
                    ));
                }
            }
        }
        if let Some(ref l) = labels {
            if l.len() != k {
                return Err(Error::InvalidInput("label count mismatch".into()));
            }
        }
        Ok(MvSample {
            funcs,
            layout,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.funcs.len()
    }

    pub fn k(&self) -> usize {
        self.funcs[0].len()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.funcs[0][0].grid
    }

    /// Sub-sample with the given observation indices.
    pub fn subset(&self, indices: &[usize]) -> Result<MvSample> {
        let funcs = indices
            .iter()
            .map(|&i| {
                self.funcs
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidParameter(format!("observation {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        MvSample::new(funcs, self.layout.clone(), self.labels.clone())
    }

    /// SRSFs of all component functions.
    pub fn srsfs(&self) -> Result<Vec<Vec<Srsf>>> {
        self.funcs
            .iter()
            .map(|row| row.iter().map(srsf::srsf_transform).collect())
            .collect()
    }

    /// Apply the grid smoother to every function.
    pub fn presmoothed(&self, strength: f64) -> Result<MvSample> {
        let funcs = self
            .funcs
            .iter()
            .map(|row| {
                row.iter()
                    .map(|f| crate::simgen::presmooth(f, strength))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        MvSample::new(funcs, self.layout.clone(), self.labels.clone())
    }
}

/// Extrinsic mean of warping functions: average the warp SRSFs, renormalize
/// to unit norm, and map back to a warp.
pub fn mean_warp(warps: &[Warp]) -> Result<Warp> {
    if warps.is_empty() {
        return Err(Error::InvalidParameter("mean of empty warp set".into()));
    }
    let psis: Vec<WarpSrsf> = warps.iter().map(|w| w.to_psi()).collect::<Result<_>>()?;
    WarpSrsf::mean(&psis)?.to_warp()
}

/// Output of the channel-generic registration loop.
pub(crate) struct RegCore {
    pub template: Vec<Vec<f64>>,
    pub warps: Vec<Warp>,
    pub iterations: usize,
    pub cost_trace: Vec<f64>,
    pub converged: bool,
}

/// Alternating template/alignment minimization over multichannel SRSFs.
/// `obs[i]` holds the channel value vectors of observation i. The penalty
/// target is the identity SRSF ψ ≡ 1.
pub(crate) fn register_core(
    grid: &TimeGrid,
    obs: &[Vec<Vec<f64>>],
    lambda: f64,
    cfg: &RegConfig,
) -> Result<RegCore> {
    let n = obs.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "multiple registration needs at least 2 observations".into(),
        ));
    }
    let nch = obs[0].len();
    let m = grid.len();
    let ones = vec![1.0; m];

    // Initialize with the plain cross-sectional mean.
    let mut template: Vec<Vec<f64>> = vec![vec![0.0; m]; nch];
    for ob in obs {
        for (c, ch) in ob.iter().enumerate() {
            for (acc, v) in template[c].iter_mut().zip(ch) {
                *acc += v / n as f64;
            }
        }
    }

    let mut warps: Vec<Warp> = Vec::new();
    let mut cost_trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let tpl_refs: Vec<&[f64]> = template.iter().map(|c| c.as_slice()).collect();
        let results: Vec<AlignResult> = obs
            .par_iter()
            .map(|ob| {
                let q_refs: Vec<&[f64]> = ob.iter().map(|c| c.as_slice()).collect();
                alignment::align_multichannel(grid, &tpl_refs, &q_refs, lambda, &ones, &cfg.dp)
            })
            .collect::<Result<_>>()?;
        warps = results.into_iter().map(|r| r.warp).collect();

        // Exact minimizer of the data term for fixed warps.
        let mut new_template: Vec<Vec<f64>> = vec![vec![0.0; m]; nch];
        for (ob, w) in obs.iter().zip(&warps) {
            for (c, ch) in ob.iter().enumerate() {
                let vals = alignment::dp_warped_values(grid, ch, w);
                for (acc, v) in new_template[c].iter_mut().zip(&vals) {
                    *acc += v / n as f64;
                }
            }
        }

        let change: f64 = template
            .iter()
            .zip(&new_template)
            .map(|(a, b)| grid::l2_distance(grid, a, b))
            .sum();
        let scale: f64 = template.iter().map(|c| grid::l2_norm(grid, c)).sum();
        template = new_template;

        // Cost after the template update.
        let tpl_refs: Vec<&[f64]> = template.iter().map(|c| c.as_slice()).collect();
        let cost: f64 = obs
            .iter()
            .zip(&warps)
            .map(|(ob, w)| {
                let q_refs: Vec<&[f64]> = ob.iter().map(|c| c.as_slice()).collect();
                let (data, pen) = alignment::objective_at(grid, &tpl_refs, &q_refs, &ones, w);
                data + lambda * pen
            })
            .sum();
        cost_trace.push(cost);

        if change <= cfg.tol * scale.max(1e-12) {
            converged = true;
            break;
        }
    }

    // Center: re-express template and warps so the warps average to the
    // identity. Iterated because kinked DP warps leave a small residual in
    // the extrinsic mean after one composition pass.
    let id = Warp::identity(grid.clone());
    let mut total_inv = id.clone();
    for _ in 0..6 {
        let gbar = mean_warp(&warps)?;
        if crate::warp::extrinsic_phase_distance(&gbar, &id)? <= 2.5e-4 {
            break;
        }
        let ginv = gbar.invert()?;
        for w in warps.iter_mut() {
            *w = w.compose(&ginv)?;
        }
        total_inv = total_inv.compose(&ginv)?;
    }
    if !total_inv.is_identity() {
        for ch in template.iter_mut() {
            *ch = srsf::warp_action_values(grid, ch, &total_inv);
        }
    }

    Ok(RegCore {
        template,
        warps,
        iterations,
        cost_trace,
        converged,
    })
}

/// Multiple registration of univariate SRSFs with identity-target penalty
/// weight `lambda` (0 for the unpenalized problem).
pub fn register_multiple(qs: &[Srsf], lambda: f64, cfg: &RegConfig) -> Result<MultipleRegResult> {
    let first = qs
        .first()
        .ok_or_else(|| Error::InvalidInput("empty SRSF list".into()))?;
    let g = first.grid.clone();
    for q in qs {
        if q.grid != g {
            return Err(Error::GridMismatch("register_multiple".into()));
        }
    }
    let obs: Vec<Vec<Vec<f64>>> = qs.iter().map(|q| vec![q.values.clone()]).collect();
    let core = register_core(&g, &obs, lambda, cfg)?;
    let anchor = qs.iter().map(|q| q.anchor).sum::<f64>() / qs.len() as f64;
    let template = Srsf {
        grid: g.clone(),
        values: core.template.into_iter().next().unwrap(),
        anchor,
    };
    let aligned = qs
        .iter()
        .zip(&core.warps)
        .map(|(q, w)| srsf::warp_action(q, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultipleRegResult {
        template,
        warps: core.warps,
        aligned,
        iterations: core.iterations,
        cost_trace: core.cost_trace,
        converged: core.converged,
    })
}

/// Componentwise baseline: multiple registration of each component
/// independently across observations.
pub fn register_componentwise(
    sample: &MvSample,
    lambda: f64,
    cfg: &RegConfig,
) -> Result<Vec<MultipleRegResult>> {
    let qs = sample.srsfs()?;
    (0..sample.k())
        .map(|j| {
            let column: Vec<Srsf> = qs.iter().map(|row| row[j].clone()).collect();
            register_multiple(&column, lambda, cfg)
        })
        .collect()
}

/// Universal baseline: one warp per observation, estimated from the
/// vector-valued SRSF with the Euclidean norm across components.
pub fn register_universal(
    sample: &MvSample,
    lambda: f64,
    cfg: &RegConfig,
) -> Result<UniversalRegResult> {
    let g = sample.grid().clone();
    let mut obs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(sample.n());
    let mut anchors: Vec<Vec<f64>> = Vec::new();
    for row in &sample.funcs {
        let refs: Vec<&SampledFunction> = row.iter().collect();
        let mq = srsf::multivariate_srsf(&refs)?;
        anchors.push(mq.anchors.clone());
        obs.push(mq.channels);
    }
    let core = register_core(&g, &obs, lambda, cfg)?;

    let k = sample.k();
    let template_channels: Vec<Srsf> = core
        .template
        .into_iter()
        .enumerate()
        .map(|(j, values)| Srsf {
            grid: g.clone(),
            values,
            anchor: anchors.iter().map(|a| a[j]).sum::<f64>() / anchors.len() as f64,
        })
        .collect();

    // Univariate aligned SRSFs under the common warp.
    let aligned = sample
        .funcs
        .iter()
        .zip(&core.warps)
        .map(|(row, w)| {
            row.iter()
                .map(|f| srsf::warp_action(&srsf::srsf_transform(f)?, w))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    debug_assert_eq!(aligned[0].len(), k);

    Ok(UniversalRegResult {
        template_channels,
        warps: core.warps,
        aligned,
        iterations: core.iterations,
        cost_trace: core.cost_trace,
        converged: core.converged,
    })
}
