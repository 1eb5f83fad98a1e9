use elastic_spatial::eval;
use elastic_spatial::pipeline::{run_registration, Method};
use elastic_spatial::simgen::{self, SimConfig};
use elastic_spatial::spatial_registration::SpatialRegConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds: Vec<u64> = args[1].split(',').map(|s| s.parse().unwrap()).collect();
    let lambdas: Vec<f64> = args[2].split(',').map(|s| s.parse().unwrap()).collect();
    let presmooth: f64 = args[3].parse().unwrap();
    let setting: u8 = if args.len() > 4 { args[4].parse().unwrap() } else { 1 };
    let sigma_e: f64 = if args.len() > 5 { args[5].parse().unwrap() } else { 0.5 };

    for &seed in &seeds {
        let mut cfg = if setting == 1 { SimConfig::setting1() } else { SimConfig::setting2(sigma_e) };
        cfg.seed = seed;
        if setting == 2 { cfg.m = 151; }
        let truth = simgen::gen(&cfg).unwrap();
        let sample = if presmooth > 0.0 { truth.sample.presmoothed(presmooth).unwrap() } else { truth.sample.clone() };

        // smoothing bias on the templates themselves
        if seed == seeds[0] {
            let bias: f64 = truth.templates.iter().map(|mu| {
                let sm = simgen::presmooth(mu, presmooth).unwrap();
                let d = sm.l2_distance(mu);
                d * d
            }).sum::<f64>() / truth.templates.len() as f64;
            println!("presmooth {presmooth}: template smoothing bias = {bias:.4}");
        }

        for (method, name) in [(Method::None, "none"), (Method::Universal, "universal"), (Method::Componentwise, "componentwise")] {
            let t0 = std::time::Instant::now();
            let out = run_registration(&sample, method, &SpatialRegConfig::new(0.0)).unwrap();
            let rep = eval::metric_report(&out.aligned_funcs, &out.aligned_srsf, &truth.templates, name, 0.0, Some(seed)).unwrap();
            println!("seed {seed} {name}: mse={:.4} qmse={:.3}  [{:.0}s]", rep.mse, rep.qmse, t0.elapsed().as_secs_f64());
        }
        for &l in &lambdas {
            let t0 = std::time::Instant::now();
            let out = run_registration(&sample, Method::Spatial, &SpatialRegConfig::new(l)).unwrap();
            let rep = eval::metric_report(&out.aligned_funcs, &out.aligned_srsf, &truth.templates, "spatial", l, Some(seed)).unwrap();
            println!("seed {seed} spatial l={l}: mse={:.4} qmse={:.3} iters={} [{:.0}s]", rep.mse, rep.qmse, out.diagnostics.iterations, t0.elapsed().as_secs_f64());
        }
    }
}
