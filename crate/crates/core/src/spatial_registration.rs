//! Spatially penalized multiple registration of multivariate functional
//! data: per-component templates are estimated jointly with per-(i, j)
//! warps whose phase SRSFs are pulled toward kriging predictions built
//! from the other components of the same observation.
//!
//! Structure: an initialization block estimates cross-component phases,
//! per-observation phase trace-variograms and kriging weights once; the
//! iteration block then alternates an inner Gauss–Seidel sweep over
//! components (kriging target, penalized DP solve) with an outer template
//! update, until the templates stop moving.

use rayon::prelude::*;

use crate::alignment::{self, DpConfig};
use crate::error::{Error, Result};
use crate::grid::{self, SampledFunction, TimeGrid};
use crate::registration::{self, MvSample, RegConfig};
use crate::spatial::{
    self, EmpiricalVariogram, KrigingWeights, VariogramBins, VariogramModel,
};
use crate::srsf::{self, Srsf};
use crate::warp::{Warp, WarpSrsf};

/// Template initialization variants: componentwise-aligned templates or
/// the plain cross-sectional SRSF mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum InitTemplate {
    Aligned,
    RawMean,
}

#[derive(Debug, Clone)]
pub struct SpatialRegConfig {
    pub lambda: f64,
    /// Outer stop: relative summed template change.
    pub eps_outer: f64,
    /// Inner stop: summed squared phase-SRSF change per observation.
    pub eps_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub dp: DpConfig,
    pub init_template: InitTemplate,
    /// Controls for the multiple registrations used during initialization.
    pub init_reg: RegConfig,
    /// Run the full iteration budget regardless of the tolerances
    /// (convergence diagnostics).
    pub disable_early_stop: bool,
}

impl SpatialRegConfig {
    pub fn new(lambda: f64) -> Self {
        SpatialRegConfig {
            lambda,
            eps_outer: 1e-4,
            eps_inner: 1e-4,
            max_outer: 20,
            max_inner: 10,
            dp: DpConfig::default(),
            init_template: InitTemplate::Aligned,
            init_reg: RegConfig::default(),
            disable_early_stop: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::InvalidParameter("lambda must be nonnegative".into()));
        }
        if self.eps_outer <= 0.0 || self.eps_inner <= 0.0 {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidParameter("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Output of the initialization block.
#[derive(Debug, Clone)]
pub struct InitState {
    pub templates: Vec<Srsf>,
    /// Cross-component phase estimates per observation.
    pub xi: Vec<Vec<Warp>>,
    pub xi_psis: Vec<Vec<WarpSrsf>>,
    pub variograms: Vec<EmpiricalVariogram>,
    pub models: Vec<VariogramModel>,
    /// Kriging weight rows, indexed [observation][component].
    pub weights: Vec<Vec<KrigingWeights>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CostKind {
    Inner,
    Outer,
}

/// One entry of the cost trace; `iteration` is the cumulative inner-sweep
/// counter.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CostPoint {
    pub iteration: usize,
    pub kind: CostKind,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct SpatialRegResult {
    pub templates: Vec<Srsf>,
    pub warps: Vec<Vec<Warp>>,
    pub aligned_srsf: Vec<Vec<Srsf>>,
    pub aligned_funcs: Vec<Vec<SampledFunction>>,
    /// Cross-sectional means of the aligned functions.
    pub function_templates: Vec<SampledFunction>,
    pub weights: Vec<Vec<KrigingWeights>>,
    pub variograms: Vec<EmpiricalVariogram>,
    pub models: Vec<VariogramModel>,
    pub cost_trace: Vec<CostPoint>,
    /// δ(k): mean squared phase-SRSF change per cumulative inner sweep.
    pub delta_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub total_inner_iterations: usize,
    pub converged: bool,
}

fn degenerate_model(emp: &EmpiricalVariogram) -> VariogramModel {
    let mean = if emp.bins.is_empty() {
        0.0
    } else {
        emp.bins.iter().map(|b| b.estimate).sum::<f64>() / emp.bins.len() as f64
    };
    let range = emp.bins.iter().map(|b| b.center).fold(1.0, f64::max);
    VariogramModel {
        nugget: mean,
        sill: 0.0,
        range,
        degenerate: true,
    }
}

/// Initialization block: componentwise templates, per-observation
/// cross-component phases, trace-variograms and kriging weights.
pub fn initialize(sample: &MvSample, cfg: &SpatialRegConfig) -> Result<InitState> {
    cfg.validate()?;
    let n = sample.n();
    let k = sample.k();
    if n < 2 || k < 2 {
        return Err(Error::InvalidInput("need n >= 2 and K >= 2".into()));
    }
    let qs = sample.srsfs().map_err(|e| e.in_stage("srsf transform"))?;
    let grid = sample.grid().clone();

    // Componentwise template initialization.
    let templates: Vec<Srsf> = match cfg.init_template {
        InitTemplate::Aligned => (0..k)
            .map(|j| {
                let column: Vec<Srsf> = qs.iter().map(|row| row[j].clone()).collect();
                registration::register_multiple(&column, 0.0, &cfg.init_reg).map(|r| r.template)
            })
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("template initialization"))?,
        InitTemplate::RawMean => (0..k)
            .map(|j| {
                let mut values = vec![0.0; grid.len()];
                let mut anchor = 0.0;
                for row in &qs {
                    for (acc, v) in values.iter_mut().zip(&row[j].values) {
                        *acc += v / n as f64;
                    }
                    anchor += row[j].anchor / n as f64;
                }
                Srsf {
                    grid: grid.clone(),
                    values,
                    anchor,
                }
            })
            .collect(),
    };

    // Per-observation multiple registration across components estimates
    // the cross-component phases.
    let xi: Vec<Vec<Warp>> = sample
        .funcs
        .iter()
        .enumerate()
        .map(|(i, _)| {
            registration::register_multiple(&qs[i], 0.0, &cfg.init_reg).map(|r| r.warps)
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("cross-component phase estimation"))?;
    let xi_psis: Vec<Vec<WarpSrsf>> = xi
        .iter()
        .map(|row| row.iter().map(|w| w.to_psi()).collect())
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("cross-component phase estimation"))?;

    // Per-observation variograms, model fits and kriging weights. With too
    // few informative bins the field is treated as degenerate and the
    // weights fall back to uniform.
    let bins = VariogramBins::default_for(&sample.layout)
        .map_err(|e| e.in_stage("variogram estimation"))?;
    let mut variograms = Vec::with_capacity(n);
    let mut models = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for psis in &xi_psis {
        let emp = spatial::empirical_phase_variogram(psis, &sample.layout, &bins)
            .map_err(|e| e.in_stage("variogram estimation"))?;
        let model = match spatial::fit_variogram(&emp) {
            Ok(m) => m,
            Err(_) => {
                log::warn!("variogram fit fell back to a degenerate model");
                degenerate_model(&emp)
            }
        };
        let rows: Vec<KrigingWeights> = (0..k)
            .map(|j| spatial::solve_kriging_weights(&model, &sample.layout, j))
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("kriging weights"))?;
        variograms.push(emp);
        models.push(model);
        weights.push(rows);
    }

    Ok(InitState {
        templates,
        xi,
        xi_psis,
        variograms,
        models,
        weights,
    })
}

struct SweepRecord {
    change: f64,
    cost: f64,
}

struct ObservationState {
    warps: Vec<Warp>,
    psis: Vec<WarpSrsf>,
    sweeps: Vec<SweepRecord>,
}

/// Inner Gauss–Seidel loop for one observation: each component's kriging
/// target mixes the already-updated phases of earlier components with the
/// previous-sweep phases of later ones.
#[allow(clippy::too_many_arguments)]
fn run_inner(
    i: usize,
    outer: usize,
    grid: &TimeGrid,
    q_row: &[Srsf],
    templates: &[Vec<f64>],
    start_psis: &[WarpSrsf],
    weight_rows: &[KrigingWeights],
    cfg: &SpatialRegConfig,
) -> Result<ObservationState> {
    let k = q_row.len();
    let mut psis: Vec<WarpSrsf> = start_psis.to_vec();
    let mut warps: Vec<Warp> = vec![Warp::identity(grid.clone()); k];
    let mut sweeps = Vec::new();
    let mut costs = vec![0.0; k];
    for sweep in 0..cfg.max_inner {
        let prev = psis.clone();
        for j in 0..k {
            let target = spatial::krige_psi(&weight_rows[j], &psis)?;
            let res = alignment::align_multichannel(
                grid,
                &[&templates[j]],
                &[&q_row[j].values],
                cfg.lambda,
                target.values(),
                &cfg.dp,
            )?;
            if !res.cost.is_finite() {
                return Err(Error::Numerical {
                    obs: i,
                    comp: j,
                    outer,
                    inner: sweep,
                    detail: "non-finite alignment cost".into(),
                });
            }
            psis[j] = res.warp.to_psi()?;
            warps[j] = res.warp;
            costs[j] = res.cost;
        }
        let change: f64 = psis
            .iter()
            .zip(&prev)
            .map(|(a, b)| {
                let d = a.l2_distance(b);
                d * d
            })
            .sum();
        sweeps.push(SweepRecord {
            change,
            cost: costs.iter().sum(),
        });
        if !cfg.disable_early_stop && change <= cfg.eps_inner {
            break;
        }
    }
    Ok(ObservationState {
        warps,
        psis,
        sweeps,
    })
}

/// Iterative centering shared with the baselines: right-compose all warps
/// with the inverse extrinsic mean until the mean is the identity.
fn center_component(grid: &TimeGrid, warps: &mut [Warp], template: &mut Vec<f64>) -> Result<()> {
    let id = Warp::identity(grid.clone());
    let mut total_inv = id.clone();
    for _ in 0..6 {
        let gbar = registration::mean_warp(warps)?;
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
        *template = srsf::warp_action_values(grid, template, &total_inv);
    }
    Ok(())
}

/// The full spatially penalized registration.
pub fn register_spatial(sample: &MvSample, cfg: &SpatialRegConfig) -> Result<SpatialRegResult> {
    let init = initialize(sample, cfg)?;
    register_spatial_from(sample, cfg, init)
}

/// Run the iteration block from a prepared initialization.
pub fn register_spatial_from(
    sample: &MvSample,
    cfg: &SpatialRegConfig,
    init: InitState,
) -> Result<SpatialRegResult> {
    cfg.validate()?;
    let n = sample.n();
    let k = sample.k();
    let grid = sample.grid().clone();
    let qs = sample.srsfs()?;

    let mut templates: Vec<Vec<f64>> = init.templates.iter().map(|t| t.values.clone()).collect();
    let anchors: Vec<f64> = (0..k)
        .map(|j| qs.iter().map(|row| row[j].anchor).sum::<f64>() / n as f64)
        .collect();
    let mut psis: Vec<Vec<WarpSrsf>> = vec![vec![WarpSrsf::identity(grid.clone()); k]; n];
    let mut warps: Vec<Vec<Warp>> = vec![vec![Warp::identity(grid.clone()); k]; n];

    let mut cost_trace: Vec<CostPoint> = Vec::new();
    let mut delta_trace: Vec<f64> = Vec::new();
    let mut global_sweep = 0usize;
    let mut converged = false;
    let mut outer_iterations = 0usize;

    for z in 0..cfg.max_outer {
        outer_iterations = z + 1;
        let states: Vec<ObservationState> = (0..n)
            .into_par_iter()
            .map(|i| {
                run_inner(
                    i,
                    z,
                    &grid,
                    &qs[i],
                    &templates,
                    &psis[i],
                    &init.weights[i],
                    cfg,
                )
            })
            .collect::<Result<_>>()?;

        // Aggregate per-sweep diagnostics, padding observations that
        // stopped early (no further change, cost frozen at its last value).
        let rounds = states.iter().map(|s| s.sweeps.len()).max().unwrap_or(0);
        for r in 0..rounds {
            global_sweep += 1;
            let mut change = 0.0;
            let mut cost = 0.0;
            for s in &states {
                let idx = r.min(s.sweeps.len() - 1);
                if r < s.sweeps.len() {
                    change += s.sweeps[r].change;
                }
                cost += s.sweeps[idx].cost;
            }
            delta_trace.push(change / (k as f64 * n as f64));
            cost_trace.push(CostPoint {
                iteration: global_sweep,
                kind: CostKind::Inner,
                value: cost / k as f64,
            });
        }
        for (i, s) in states.into_iter().enumerate() {
            warps[i] = s.warps;
            psis[i] = s.psis;
        }

        // Outer template update: exact minimizer of the data term.
        let mut new_templates: Vec<Vec<f64>> = vec![vec![0.0; grid.len()]; k];
        for i in 0..n {
            for j in 0..k {
                let vals = alignment::dp_warped_values(&grid, &qs[i][j].values, &warps[i][j]);
                for (acc, v) in new_templates[j].iter_mut().zip(&vals) {
                    *acc += v / n as f64;
                }
            }
        }
        let tdist: f64 = templates
            .iter()
            .zip(&new_templates)
            .map(|(a, b)| grid::l2_distance(&grid, a, b))
            .sum();
        let tscale: f64 = templates.iter().map(|t| grid::l2_norm(&grid, t)).sum();
        templates = new_templates;

        // Cost at the fresh templates with fully updated kriging targets.
        let mut outer_cost = 0.0;
        for i in 0..n {
            for j in 0..k {
                let target = spatial::krige_psi(&init.weights[i][j], &psis[i])?;
                let (data, pen) = alignment::objective_at(
                    &grid,
                    &[&templates[j]],
                    &[&qs[i][j].values],
                    target.values(),
                    &warps[i][j],
                );
                outer_cost += data + cfg.lambda * pen;
            }
        }
        cost_trace.push(CostPoint {
            iteration: global_sweep,
            kind: CostKind::Outer,
            value: outer_cost / k as f64,
        });

        if !cfg.disable_early_stop && tdist <= cfg.eps_outer * tscale.max(1e-12) {
            converged = true;
            break;
        }
    }

    // Final per-component centering for comparability with the baselines.
    for j in 0..k {
        let mut column: Vec<Warp> = (0..n).map(|i| warps[i][j].clone()).collect();
        center_component(&grid, &mut column, &mut templates[j])?;
        for (i, w) in column.into_iter().enumerate() {
            warps[i][j] = w;
        }
    }

    let template_srsfs: Vec<Srsf> = templates
        .into_iter()
        .zip(&anchors)
        .map(|(values, &anchor)| Srsf {
            grid: grid.clone(),
            values,
            anchor,
        })
        .collect();

    let aligned_srsf: Vec<Vec<Srsf>> = qs
        .iter()
        .zip(&warps)
        .map(|(row, wrow)| {
            row.iter()
                .zip(wrow)
                .map(|(q, w)| srsf::warp_action(q, w))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let aligned_funcs: Vec<Vec<SampledFunction>> = sample
        .funcs
        .iter()
        .zip(&warps)
        .map(|(row, wrow)| {
            row.iter()
                .zip(wrow)
                .map(|(f, w)| f.compose_warp(w))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let function_templates: Vec<SampledFunction> = (0..k)
        .map(|j| {
            let col: Vec<&SampledFunction> = aligned_funcs.iter().map(|row| &row[j]).collect();
            SampledFunction::mean_of(&col)
        })
        .collect::<Result<_>>()?;

    let total_inner_iterations = global_sweep;
    Ok(SpatialRegResult {
        templates: template_srsfs,
        warps,
        aligned_srsf,
        aligned_funcs,
        function_templates,
        weights: init.weights,
        variograms: init.variograms,
        models: init.models,
        cost_trace,
        delta_trace,
        outer_iterations,
        total_inner_iterations,
        converged,
    })
}

/// δ(k) = (1/(Kn)) Σ_i Σ_j ‖ψ̂_ij^{(k)} − ψ̂_ij^{(k−1)}‖² from a recorded
/// history of phase-SRSF states.
pub fn convergence_delta(history: &[Vec<Vec<WarpSrsf>>]) -> Result<Vec<f64>> {
    if history.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two recorded iterations".into(),
        ));
    }
    let n = history[0].len();
    let k = history[0][0].len();
    let mut out = Vec::with_capacity(history.len() - 1);
    for w in history.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        if prev.len() != n || next.len() != n {
            return Err(Error::InvalidInput("ragged history".into()));
        }
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..k {
                let d = next[i][j].l2_distance(&prev[i][j]);
                acc += d * d;
            }
        }
        out.push(acc / (k as f64 * n as f64));
    }
    Ok(out)
}
