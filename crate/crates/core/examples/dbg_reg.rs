use elastic_spatial::grid::{SampledFunction, TimeGrid};
use elastic_spatial::registration::{mean_warp, register_multiple, RegConfig};
use elastic_spatial::srsf::srsf_transform;
use elastic_spatial::warp::{extrinsic_phase_distance, Warp, WarpSrsf};

fn func(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> SampledFunction {
    SampledFunction::new(grid.clone(), grid.points().iter().map(|&t| f(t)).collect()).unwrap()
}
fn two_bump(grid: &TimeGrid) -> SampledFunction {
    func(grid, |t| {
        3.0 * (-100.0 * (t - 1.0 / 3.0).powi(2)).exp()
            + 2.5 * (-100.0 * (t - 2.0 / 3.0).powi(2)).exp()
    })
}
fn exp_warp(grid: &TimeGrid, a: f64) -> Warp {
    if a == 0.0 { return Warp::identity(grid.clone()); }
    let denom = a.exp() - 1.0;
    let v: Vec<f64> = grid.points().iter().map(|&t| ((a * t).exp() - 1.0) / denom).collect();
    Warp::new_repaired(grid.clone(), v).unwrap().0
}

fn main() {
    for m in [201usize, 501] {
        let g = TimeGrid::uniform(m).unwrap();
        let id = Warp::identity(g.clone());
        let base = two_bump(&g);
        let true_warps: Vec<Warp> = [0.6, -0.3, 0.1, 0.4].iter().map(|&a| exp_warp(&g, a)).collect();
        let qs: Vec<_> = true_warps
            .iter()
            .map(|w| srsf_transform(&base.compose_warp(w).unwrap()).unwrap())
            .collect();
        let res = register_multiple(&qs, 0.0, &RegConfig::default()).unwrap();
        let mut warps = res.warps.clone();
        println!("m={m}");
        for pass in 0..5 {
            let mw = mean_warp(&warps).unwrap();
            let d = extrinsic_phase_distance(&mw, &id).unwrap();
            println!("  interp-compose pass {pass}: extrinsic {d:.6}");
            if d < 1e-4 { break; }
            let ginv = mw.invert().unwrap();
            for w in warps.iter_mut() { *w = w.compose(&ginv).unwrap(); }
        }
        // action-form centering variant
        let mut warps2 = res.warps.clone();
        for pass in 0..5 {
            let mw = mean_warp(&warps2).unwrap();
            let d = extrinsic_phase_distance(&mw, &id).unwrap();
            println!("  psi-action  pass {pass}: extrinsic {d:.6}");
            if d < 1e-4 { break; }
            let ginv = mw.invert().unwrap();
            warps2 = warps2
                .iter()
                .map(|w| w.to_psi().unwrap().warped_by(&ginv).unwrap().to_warp().unwrap())
                .collect();
        }
        // direct psi-mean residual without to_warp round trip
        let psis: Vec<WarpSrsf> = warps2.iter().map(|w| w.to_psi().unwrap()).collect();
        let meanpsi = WarpSrsf::mean(&psis).unwrap();
        let one = WarpSrsf::identity(g.clone());
        println!("  psi-mean residual (no round trip): {:.6}", meanpsi.l2_distance(&one));
    }
}
