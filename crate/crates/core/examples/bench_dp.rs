use elastic_spatial::alignment::{align_pairwise, DpConfig};
use elastic_spatial::grid::{SampledFunction, TimeGrid};
use elastic_spatial::srsf::srsf_transform;
use std::time::Instant;

fn main() {
    let m = 201;
    let g = TimeGrid::uniform(m).unwrap();
    let f1 = SampledFunction::new(g.clone(), g.points().iter().map(|&t| (12.0 * t).sin() + 3.0 * (-100.0*(t-0.3f64).powi(2)).exp()).collect()).unwrap();
    let f2 = SampledFunction::new(g.clone(), g.points().iter().map(|&t| (12.0 * t).cos() + 3.0 * (-100.0*(t-0.5f64).powi(2)).exp()).collect()).unwrap();
    let q1 = srsf_transform(&f1).unwrap();
    let q2 = srsf_transform(&f2).unwrap();
    let cfg = DpConfig::default();
    let t0 = Instant::now();
    let reps = 50;
    let mut acc = 0.0;
    for _ in 0..reps {
        acc += align_pairwise(&q1, &q2, &cfg).unwrap().cost;
    }
    println!("m={m}: {:.2} ms per DP (acc {acc:.3})", t0.elapsed().as_secs_f64() * 1000.0 / reps as f64);
}
