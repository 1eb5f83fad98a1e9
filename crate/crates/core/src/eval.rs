//! Template-estimation metrics (MSE in function space, QMSE in SRSF
//! space), 4-fold cross-validation for the penalty parameter, and
//! trace-variogram diagnostics on estimated template functions.

use rand::seq::SliceRandom;

use crate::alignment;
use crate::error::{Error, Result};
use crate::grid::SampledFunction;
use crate::pipeline::{run_registration, Method};
use crate::registration::MvSample;
use crate::simgen;
use crate::spatial::{self, EmpiricalVariogram, SpatialLayout, VariogramBins};
use crate::spatial_registration::SpatialRegConfig;
use crate::srsf::{self, Srsf};

/// Per-component and pooled template-estimation errors.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ComponentMetrics {
    pub component: usize,
    pub mse: f64,
    pub qmse: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricReport {
    pub method: String,
    pub lambda: f64,
    pub replicate: Option<u64>,
    pub mse: f64,
    pub qmse: f64,
    pub per_component: Vec<ComponentMetrics>,
}

/// MSE = (1/Kn) Σ_j Σ_i ‖f̃_ij − μ_j‖².
pub fn mse(aligned: &[Vec<SampledFunction>], truth: &[SampledFunction]) -> Result<f64> {
    let (n, k) = shape_check(aligned, truth)?;
    let mut acc = 0.0;
    for row in aligned {
        for (f, mu) in row.iter().zip(truth) {
            let d = f.l2_distance(mu);
            acc += d * d;
        }
    }
    Ok(acc / (n * k) as f64)
}

/// QMSE = (1/Kn) Σ_j Σ_i ‖q̃_ij − Q(μ_j)‖².
pub fn qmse(aligned: &[Vec<Srsf>], truth_q: &[Srsf]) -> Result<f64> {
    if aligned.is_empty() || aligned[0].len() != truth_q.len() {
        return Err(Error::InvalidInput("shape mismatch".into()));
    }
    let n = aligned.len();
    let k = truth_q.len();
    let mut acc = 0.0;
    for row in aligned {
        for (q, tq) in row.iter().zip(truth_q) {
            if q.grid != tq.grid {
                return Err(Error::GridMismatch("qmse".into()));
            }
            let d = q.l2_distance(tq);
            acc += d * d;
        }
    }
    Ok(acc / (n * k) as f64)
}

fn shape_check(
    aligned: &[Vec<SampledFunction>],
    truth: &[SampledFunction],
) -> Result<(usize, usize)> {
    let n = aligned.len();
    if n == 0 {
        return Err(Error::InvalidInput("no aligned functions".into()));
    }
    let k = truth.len();
    for row in aligned {
        if row.len() != k {
            return Err(Error::InvalidInput("component count mismatch".into()));
        }
        for (f, mu) in row.iter().zip(truth) {
            if f.grid != mu.grid {
                return Err(Error::GridMismatch("mse".into()));
            }
        }
    }
    Ok((n, k))
}

/// Pooled and per-component metrics against the true templates.
pub fn metric_report(
    aligned_funcs: &[Vec<SampledFunction>],
    aligned_srsf: &[Vec<Srsf>],
    truth: &[SampledFunction],
    method: &str,
    lambda: f64,
    replicate: Option<u64>,
) -> Result<MetricReport> {
    let (n, k) = shape_check(aligned_funcs, truth)?;
    let truth_q: Vec<Srsf> = truth
        .iter()
        .map(srsf::srsf_transform)
        .collect::<Result<_>>()?;
    let mut per_component = Vec::with_capacity(k);
    for j in 0..k {
        let mut acc_f = 0.0;
        let mut acc_q = 0.0;
        for i in 0..n {
            let d = aligned_funcs[i][j].l2_distance(&truth[j]);
            acc_f += d * d;
            let dq = aligned_srsf[i][j].l2_distance(&truth_q[j]);
            acc_q += dq * dq;
        }
        per_component.push(ComponentMetrics {
            component: j,
            mse: acc_f / n as f64,
            qmse: acc_q / n as f64,
        });
    }
    let mse = per_component.iter().map(|c| c.mse).sum::<f64>() / k as f64;
    let qmse = per_component.iter().map(|c| c.qmse).sum::<f64>() / k as f64;
    Ok(MetricReport {
        method: method.to_string(),
        lambda,
        replicate,
        mse,
        qmse,
        per_component,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CvReport {
    pub lambdas: Vec<f64>,
    pub criteria: Vec<f64>,
    pub selected_lambda: f64,
    pub folds: Vec<Vec<usize>>,
}

/// Default logarithmic penalty grid 1e−4 … 1e3.
pub fn default_lambda_grid() -> Vec<f64> {
    (-4..=3).map(|e| 10f64.powi(e)).collect()
}

/// Seeded partition of 0..n into near-equal folds.
pub fn make_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds == 0 || n < folds {
        return Err(Error::InvalidParameter(format!(
            "cannot split {n} observations into {folds} folds"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = simgen::substream(seed, 0xF01D);
    idx.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut cursor = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(idx[cursor..cursor + size].to_vec());
        cursor += size;
    }
    for fold in &out {
        if fold.len() < 2 {
            return Err(Error::InvalidParameter(
                "every fold needs at least 2 observations".into(),
            ));
        }
    }
    Ok(out)
}

/// K-fold cross-validation for the penalty parameter: register the
/// training folds, align each validation function to the trained template
/// by unpenalized pairwise alignment, and accumulate the squared
/// function-space residuals.
pub fn cross_validate_lambda(
    sample: &MvSample,
    lambdas: &[f64],
    method: Method,
    folds: usize,
    seed: u64,
    base_cfg: &SpatialRegConfig,
) -> Result<CvReport> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    let n = sample.n();
    let fold_sets = make_folds(n, folds, seed)?;
    let dp = base_cfg.dp.clone();

    let mut criteria = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut total = 0.0;
        for fold in &fold_sets {
            let train_idx: Vec<usize> = (0..n).filter(|i| !fold.contains(i)).collect();
            let train = sample.subset(&train_idx)?;
            let mut cfg = base_cfg.clone();
            cfg.lambda = lambda;
            let reg = run_registration(&train, method, &cfg)?;
            for &i in fold {
                for j in 0..sample.k() {
                    let template = &reg.function_templates[j];
                    let q_tpl = srsf::srsf_transform(template)?;
                    let q_val = srsf::srsf_transform(&sample.funcs[i][j])?;
                    let res = alignment::align_pairwise(&q_tpl, &q_val, &dp)?;
                    let aligned = sample.funcs[i][j].compose_warp(&res.warp)?;
                    let d = aligned.l2_distance(template);
                    total += d * d;
                }
            }
        }
        criteria.push(total / (folds * sample.k() * n) as f64);
    }

    let mut selected = lambdas[0];
    let mut best = criteria[0];
    for (&l, &c) in lambdas.iter().zip(&criteria).skip(1) {
        if c < best || (c == best && l < selected) {
            best = c;
            selected = l;
        }
    }
    Ok(CvReport {
        lambdas: lambdas.to_vec(),
        criteria,
        selected_lambda: selected,
        folds: fold_sets,
    })
}

/// Empirical trace-variogram of estimated template functions (not SRSFs).
pub fn template_trace_variogram(
    templates: &[SampledFunction],
    layout: &SpatialLayout,
    bins: &VariogramBins,
) -> Result<EmpiricalVariogram> {
    let first = templates
        .first()
        .ok_or_else(|| Error::InvalidInput("no templates".into()))?;
    let values: Vec<&[f64]> = templates.iter().map(|t| t.values.as_slice()).collect();
    spatial::binned_half_sq_distances(&first.grid, &values, layout, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::warp::Warp;

    fn func(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> SampledFunction {
        SampledFunction::new(grid.clone(), grid.points().iter().map(|&t| f(t)).collect())
            .unwrap()
    }

    #[test]
    fn exact_truth_gives_zero_metrics() {
        let g = TimeGrid::uniform(101).unwrap();
        let mu = vec![
            func(&g, |t| (3.0 * t).sin()),
            func(&g, |t| t * t + 1.0),
        ];
        let aligned = vec![mu.clone(), mu.clone()];
        assert_eq!(mse(&aligned, &mu).unwrap(), 0.0);
        let qs: Vec<Srsf> = mu.iter().map(|f| srsf::srsf_transform(f).unwrap()).collect();
        let aligned_q = vec![qs.clone(), qs.clone()];
        assert_eq!(qmse(&aligned_q, &qs).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_hits_mse_not_qmse() {
        let g = TimeGrid::uniform(201).unwrap();
        let mu = vec![func(&g, |t| (2.0 * t).cos())];
        let c = 0.7;
        let shifted = vec![vec![SampledFunction::new(
            g.clone(),
            mu[0].values.iter().map(|v| v + c).collect(),
        )
        .unwrap()]];
        let m = mse(&shifted, &mu).unwrap();
        assert!((m - c * c).abs() <= 1e-12, "mse {m}");

        let q_truth: Vec<Srsf> = mu.iter().map(|f| srsf::srsf_transform(f).unwrap()).collect();
        let q_shifted = vec![vec![srsf::srsf_transform(&shifted[0][0]).unwrap()]];
        assert!(qmse(&q_shifted, &q_truth).unwrap() <= 1e-12);
    }

    #[test]
    fn mse_invariant_to_observation_order() {
        let g = TimeGrid::uniform(81).unwrap();
        let mu = vec![func(&g, |t| t), func(&g, |t| 1.0 - t)];
        let a = vec![func(&g, |t| t + 0.1), func(&g, |t| 1.0 - t - 0.2)];
        let b = vec![func(&g, |t| t - 0.3), func(&g, |t| 1.0 - t + 0.4)];
        let m1 = mse(&[a.clone(), b.clone()], &mu).unwrap();
        let m2 = mse(&[b, a], &mu).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn folds_partition_and_validate() {
        let folds = make_folds(10, 4, 7).unwrap();
        assert_eq!(folds.len(), 4);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        // 4 observations in 4 folds leaves singleton folds.
        assert!(make_folds(4, 4, 0).is_err());
        assert!(make_folds(3, 4, 0).is_err());
        // Determinism.
        assert_eq!(make_folds(10, 4, 7).unwrap(), folds);
    }

    #[test]
    fn template_variogram_basics() {
        let g = TimeGrid::uniform(101).unwrap();
        let layout =
            SpatialLayout::new(vec![vec![0.0, 0.0], vec![1.5, 0.0]]).unwrap();
        let t1 = func(&g, |t| t);
        let bins = VariogramBins::equal_width(1, 2.0);
        // Identical templates: zero.
        let emp = template_trace_variogram(&[t1.clone(), t1.clone()], &layout, &bins).unwrap();
        assert_eq!(emp.bins.len(), 1);
        assert_eq!(emp.bins[0].estimate, 0.0);
        // Two sites: half the squared distance.
        let t2 = func(&g, |t| t + 1.0);
        let emp = template_trace_variogram(&[t1.clone(), t2.clone()], &layout, &bins).unwrap();
        let d = t1.l2_distance(&t2);
        assert!((emp.bins[0].estimate - 0.5 * d * d).abs() <= 1e-12);
    }

    #[test]
    fn qmse_invariant_to_per_function_offsets() {
        let g = TimeGrid::uniform(101).unwrap();
        let mu = vec![func(&g, |t| (4.0 * t).sin())];
        let truth_q: Vec<Srsf> = mu.iter().map(|f| srsf::srsf_transform(f).unwrap()).collect();
        let base = func(&g, |t| (4.0 * t).sin() * 0.9);
        let q_plain = vec![vec![srsf::srsf_transform(&base).unwrap()]];
        let shifted = SampledFunction::new(
            g.clone(),
            base.values.iter().map(|v| v + 2.5).collect(),
        )
        .unwrap();
        let q_shift = vec![vec![srsf::srsf_transform(&shifted).unwrap()]];
        let a = qmse(&q_plain, &truth_q).unwrap();
        let b = qmse(&q_shift, &truth_q).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn single_lambda_grid_selects_it() {
        let mut cfg = simgen::SimConfig::setting1();
        cfg.n = 8;
        cfg.k = 3;
        cfg.m = 51;
        cfg.seed = 2;
        let sample = simgen::gen(&cfg).unwrap().sample;
        let base = SpatialRegConfig::new(0.0);
        let report = cross_validate_lambda(
            &sample,
            &[0.5],
            Method::Componentwise,
            4,
            9,
            &base,
        )
        .unwrap();
        assert_eq!(report.selected_lambda, 0.5);
        assert_eq!(report.criteria.len(), 1);
    }

    #[test]
    fn criterion_invariant_to_grid_order_and_rerun() {
        let mut cfg = simgen::SimConfig::setting1();
        cfg.n = 8;
        cfg.k = 3;
        cfg.m = 51;
        cfg.seed = 4;
        let sample = simgen::gen(&cfg).unwrap().sample;
        let base = SpatialRegConfig::new(0.0);
        let grid1 = [0.01, 1.0, 100.0];
        let grid2 = [100.0, 0.01, 1.0];
        let r1 = cross_validate_lambda(&sample, &grid1, Method::Componentwise, 4, 5, &base)
            .unwrap();
        let r2 = cross_validate_lambda(&sample, &grid2, Method::Componentwise, 4, 5, &base)
            .unwrap();
        for (li, &l) in grid1.iter().enumerate() {
            let pos = grid2.iter().position(|&x| x == l).unwrap();
            assert_eq!(r1.criteria[li], r2.criteria[pos]);
        }
        assert_eq!(r1.selected_lambda, r2.selected_lambda);
        let r1b = cross_validate_lambda(&sample, &grid1, Method::Componentwise, 4, 5, &base)
            .unwrap();
        assert_eq!(r1.criteria, r1b.criteria);
    }
}
