//! Method dispatch and directory-level artifacts: run a registration
//! method on a panel and write/read the canonical output layouts.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::SampledFunction;
use crate::io;
use crate::registration::{self, MvSample, RegConfig};
use crate::simgen::SimTruth;
use crate::spatial_registration::{
    self, CostKind, CostPoint, SpatialRegConfig, SpatialRegResult,
};
use crate::srsf::{self, Srsf};
use crate::warp::Warp;

/// Registration method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    None,
    Componentwise,
    Universal,
    Spatial,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Componentwise => "componentwise",
            Method::Universal => "universal",
            Method::Spatial => "spatial",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Method::None),
            "componentwise" => Ok(Method::Componentwise),
            "universal" => Ok(Method::Universal),
            "spatial" => Ok(Method::Spatial),
            other => Err(Error::InvalidParameter(format!(
                "unknown method '{other}' (expected none|componentwise|universal|spatial)"
            ))),
        }
    }
}

/// Run summary embedded in diagnostics.json.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Diagnostics {
    pub method: String,
    pub lambda: f64,
    pub iterations: usize,
    pub inner_iterations: Option<usize>,
    pub converged: bool,
    pub cost_trace: Vec<CostPoint>,
    pub delta_trace: Vec<f64>,
    pub presmooth: Option<f64>,
    pub warnings: Vec<String>,
}

/// Uniform view over the output of any registration method.
pub struct RegistrationOutput {
    pub method: Method,
    pub lambda: f64,
    /// Warps on the full panel; universal repeats the observation warp.
    pub warps: Vec<Vec<Warp>>,
    /// The n per-observation warps (universal only).
    pub obs_warps: Option<Vec<Warp>>,
    pub aligned_funcs: Vec<Vec<SampledFunction>>,
    pub aligned_srsf: Vec<Vec<Srsf>>,
    /// Cross-sectional means of the aligned functions.
    pub function_templates: Vec<SampledFunction>,
    pub srsf_templates: Vec<Srsf>,
    pub diagnostics: Diagnostics,
    /// Full spatial result when method = spatial.
    pub spatial: Option<SpatialRegResult>,
}

fn function_templates_of(aligned: &[Vec<SampledFunction>]) -> Result<Vec<SampledFunction>> {
    let k = aligned[0].len();
    (0..k)
        .map(|j| {
            let col: Vec<&SampledFunction> = aligned.iter().map(|row| &row[j]).collect();
            SampledFunction::mean_of(&col)
        })
        .collect()
}

fn aligned_functions_of(
    sample: &MvSample,
    warps: &[Vec<Warp>],
) -> Result<Vec<Vec<SampledFunction>>> {
    sample
        .funcs
        .iter()
        .zip(warps)
        .map(|(row, wrow)| {
            row.iter()
                .zip(wrow)
                .map(|(f, w)| f.compose_warp(w))
                .collect()
        })
        .collect()
}

/// Dispatch a registration method with a shared configuration; the
/// baselines take the DP lattice and iteration controls from `cfg`.
pub fn run_registration(
    sample: &MvSample,
    method: Method,
    cfg: &SpatialRegConfig,
) -> Result<RegistrationOutput> {
    let reg_cfg = RegConfig {
        dp: cfg.dp.clone(),
        max_iters: cfg.init_reg.max_iters,
        tol: cfg.init_reg.tol,
    };
    match method {
        Method::None => {
            let n = sample.n();
            let k = sample.k();
            let id = Warp::identity(sample.grid().clone());
            let warps = vec![vec![id; k]; n];
            let aligned_funcs = sample.funcs.clone();
            let aligned_srsf = sample.srsfs()?;
            let function_templates = function_templates_of(&aligned_funcs)?;
            let srsf_templates = (0..k)
                .map(|j| {
                    let mut values = vec![0.0; sample.grid().len()];
                    let mut anchor = 0.0;
                    for row in &aligned_srsf {
                        for (acc, v) in values.iter_mut().zip(&row[j].values) {
                            *acc += v / n as f64;
                        }
                        anchor += row[j].anchor / n as f64;
                    }
                    Srsf {
                        grid: sample.grid().clone(),
                        values,
                        anchor,
                    }
                })
                .collect();
            Ok(RegistrationOutput {
                method,
                lambda: cfg.lambda,
                warps,
                obs_warps: None,
                aligned_funcs,
                aligned_srsf,
                function_templates,
                srsf_templates,
                diagnostics: Diagnostics {
                    method: method.as_str().into(),
                    lambda: cfg.lambda,
                    iterations: 0,
                    inner_iterations: None,
                    converged: true,
                    cost_trace: Vec::new(),
                    delta_trace: Vec::new(),
                    presmooth: None,
                    warnings: Vec::new(),
                },
                spatial: None,
            })
        }
        Method::Componentwise => {
            let results = registration::register_componentwise(sample, cfg.lambda, &reg_cfg)?;
            let n = sample.n();
            let k = sample.k();
            let warps: Vec<Vec<Warp>> = (0..n)
                .map(|i| (0..k).map(|j| results[j].warps[i].clone()).collect())
                .collect();
            let aligned_srsf: Vec<Vec<Srsf>> = (0..n)
                .map(|i| (0..k).map(|j| results[j].aligned[i].clone()).collect())
                .collect();
            let aligned_funcs = aligned_functions_of(sample, &warps)?;
            let function_templates = function_templates_of(&aligned_funcs)?;
            let srsf_templates: Vec<Srsf> =
                results.iter().map(|r| r.template.clone()).collect();
            let iterations = results.iter().map(|r| r.iterations).max().unwrap_or(0);
            let converged = results.iter().all(|r| r.converged);
            let cost_trace: Vec<CostPoint> = (0..iterations)
                .map(|z| CostPoint {
                    iteration: z + 1,
                    kind: CostKind::Outer,
                    value: results
                        .iter()
                        .map(|r| {
                            let idx = z.min(r.cost_trace.len().saturating_sub(1));
                            r.cost_trace.get(idx).copied().unwrap_or(0.0)
                        })
                        .sum(),
                })
                .collect();
            Ok(RegistrationOutput {
                method,
                lambda: cfg.lambda,
                warps,
                obs_warps: None,
                aligned_funcs,
                aligned_srsf,
                function_templates,
                srsf_templates,
                diagnostics: Diagnostics {
                    method: method.as_str().into(),
                    lambda: cfg.lambda,
                    iterations,
                    inner_iterations: None,
                    converged,
                    cost_trace,
                    delta_trace: Vec::new(),
                    presmooth: None,
                    warnings: Vec::new(),
                },
                spatial: None,
            })
        }
        Method::Universal => {
            let result = registration::register_universal(sample, cfg.lambda, &reg_cfg)?;
            let k = sample.k();
            let warps: Vec<Vec<Warp>> = result
                .warps
                .iter()
                .map(|w| vec![w.clone(); k])
                .collect();
            let aligned_funcs = aligned_functions_of(sample, &warps)?;
            let function_templates = function_templates_of(&aligned_funcs)?;
            let cost_trace: Vec<CostPoint> = result
                .cost_trace
                .iter()
                .enumerate()
                .map(|(z, &value)| CostPoint {
                    iteration: z + 1,
                    kind: CostKind::Outer,
                    value,
                })
                .collect();
            Ok(RegistrationOutput {
                method,
                lambda: cfg.lambda,
                warps,
                obs_warps: Some(result.warps.clone()),
                aligned_funcs,
                aligned_srsf: result.aligned.clone(),
                function_templates,
                srsf_templates: result.template_channels.clone(),
                diagnostics: Diagnostics {
                    method: method.as_str().into(),
                    lambda: cfg.lambda,
                    iterations: result.iterations,
                    inner_iterations: None,
                    converged: result.converged,
                    cost_trace,
                    delta_trace: Vec::new(),
                    presmooth: None,
                    warnings: Vec::new(),
                },
                spatial: None,
            })
        }
        Method::Spatial => {
            let result = spatial_registration::register_spatial(sample, cfg)?;
            Ok(RegistrationOutput {
                method,
                lambda: cfg.lambda,
                warps: result.warps.clone(),
                obs_warps: None,
                aligned_funcs: result.aligned_funcs.clone(),
                aligned_srsf: result.aligned_srsf.clone(),
                function_templates: result.function_templates.clone(),
                srsf_templates: result.templates.clone(),
                diagnostics: Diagnostics {
                    method: method.as_str().into(),
                    lambda: cfg.lambda,
                    iterations: result.outer_iterations,
                    inner_iterations: Some(result.total_inner_iterations),
                    converged: result.converged,
                    cost_trace: result.cost_trace.clone(),
                    delta_trace: result.delta_trace.clone(),
                    presmooth: None,
                    warnings: Vec::new(),
                },
                spatial: Some(result),
            })
        }
    }
}

/// Write a simulation directory: sample.csv, sites.csv, config.json and
/// the latent truth (templates, warps, noise).
pub fn save_simulation(
    dir: &Path,
    truth: &SimTruth,
    config_echo: &serde_json::Value,
    smoothed: Option<&MvSample>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let truth_dir = dir.join("truth");
    std::fs::create_dir_all(&truth_dir)?;

    io::write_sample_csv(&dir.join("sample.csv"), &truth.sample)?;
    io::write_sites_csv(&dir.join("sites.csv"), &truth.sample.layout)?;
    io::write_json(&dir.join("config.json"), config_echo)?;
    if let Some(sm) = smoothed {
        io::write_sample_csv(&dir.join("sample_smoothed.csv"), sm)?;
    }

    io::write_component_csv(&truth_dir.join("templates.csv"), &truth.templates)?;
    let grid = truth.sample.grid();
    let alpha_rows: Vec<Vec<f64>> = truth.alpha.iter().map(|w| w.values().to_vec()).collect();
    io::write_observation_csv(&truth_dir.join("warps_alpha.csv"), grid, &alpha_rows)?;
    io::write_warp_grid_csv(&truth_dir.join("warps_xi.csv"), &truth.xi)?;
    io::write_warp_grid_csv(&truth_dir.join("warps_total.csv"), &truth.gamma)?;
    io::write_panel_csv(&truth_dir.join("noise.csv"), grid, &truth.noise)?;
    Ok(())
}

/// Write a registration directory: templates, warps, aligned functions,
/// diagnostics, and the spatial extras when present.
pub fn save_registration(
    dir: &Path,
    out: &RegistrationOutput,
    config_echo: &serde_json::Value,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_component_csv(&dir.join("templates.csv"), &out.function_templates)?;
    let srsf_funcs: Vec<SampledFunction> = out
        .srsf_templates
        .iter()
        .map(|q| SampledFunction {
            grid: q.grid.clone(),
            values: q.values.clone(),
        })
        .collect();
    io::write_component_csv(&dir.join("templates_srsf.csv"), &srsf_funcs)?;

    match &out.obs_warps {
        Some(warps) => {
            let rows: Vec<Vec<f64>> = warps.iter().map(|w| w.values().to_vec()).collect();
            let grid = warps[0].grid().clone();
            io::write_observation_csv(&dir.join("warps.csv"), &grid, &rows)?;
        }
        None => io::write_warp_grid_csv(&dir.join("warps.csv"), &out.warps)?,
    }

    let aligned: Vec<Vec<Vec<f64>>> = out
        .aligned_funcs
        .iter()
        .map(|row| row.iter().map(|f| f.values.clone()).collect())
        .collect();
    io::write_panel_csv(
        &dir.join("aligned.csv"),
        &out.aligned_funcs[0][0].grid,
        &aligned,
    )?;

    io::write_json(&dir.join("diagnostics.json"), &out.diagnostics)?;
    io::write_json(&dir.join("config.json"), config_echo)?;

    if let Some(spatial) = &out.spatial {
        io::write_json(&dir.join("kriging_weights.json"), &spatial.weights)?;
        io::write_variogram_set_csv(
            &dir.join("phase_variograms.csv"),
            &spatial.variograms,
            &spatial.models,
        )?;
    }
    Ok(())
}

/// Load a simulation or external data directory (sample.csv + sites.csv).
pub fn load_sample_dir(dir: &Path, m_override: Option<usize>) -> Result<MvSample> {
    let sample = dir.join("sample.csv");
    let sites = dir.join("sites.csv");
    if !sample.exists() {
        return Err(Error::InvalidInput(format!(
            "no sample.csv in {}",
            dir.display()
        )));
    }
    io::read_sample_csv(&sample, &sites, m_override)
}

/// Load true templates from a simulation directory, resampled onto `grid`
/// if needed.
pub fn load_truth_templates(
    dir: &Path,
    grid: &crate::grid::TimeGrid,
) -> Result<Vec<SampledFunction>> {
    let path = dir.join("truth").join("templates.csv");
    if !path.exists() {
        return Err(Error::InvalidInput(format!(
            "truth templates not found at {}",
            path.display()
        )));
    }
    let raw = io::read_component_csv(&path)?;
    raw.into_iter()
        .map(|f| {
            if f.grid == *grid {
                Ok(f)
            } else {
                let values = grid
                    .points()
                    .iter()
                    .map(|&t| f.eval(t))
                    .collect();
                SampledFunction::new(grid.clone(), values)
            }
        })
        .collect()
}

/// Aligned SRSFs recomputed from aligned functions (file-based evaluate).
pub fn srsfs_of_aligned(aligned: &[Vec<SampledFunction>]) -> Result<Vec<Vec<Srsf>>> {
    aligned
        .iter()
        .map(|row| row.iter().map(srsf::srsf_transform).collect())
        .collect()
}
