use narrownet::*;
use narrownet::trainer::*;
use narrownet::constraints::ConstraintSpec;
use rayon::prelude::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let regime = match args.get(1).map(|s| s.as_str()).unwrap_or("mirrored") {
        "mirrored" => Regime::MirroredPgd,
        "ablation" => Regime::RegularPgdAblation,
        _ => Regime::RegularGd,
    };
    let n: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200);
    let d: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(50);
    let m: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(8);
    let eps: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let seed: u64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0);
    let data = make_synthetic(n, d, Seed(seed));
    let params0 = match regime {
        Regime::MirroredPgd => mirrored_lecun_init(d, m, HeadKind::Paired, Activation::Tanh, Seed(seed + 1000)).unwrap(),
        _ => lecun_init(d, m, HeadKind::Plain, Activation::Tanh, Seed(seed + 1000)).unwrap(),
    };
    let grid = [1e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1];
    let cells: Vec<(f64, f64)> = grid.iter().flat_map(|&a| grid.iter().map(move |&b| (a, b))).collect();
    let mut results: Vec<(f64, String)> = cells.par_iter().map(|&(lw, lv)| {
        let constraint = if regime.projects() {
            Some(match regime {
                Regime::RegularPgdAblation => ConstraintSpec::ball_only(eps, params0.w().clone()).unwrap(),
                _ => ConstraintSpec::new(eps, 0.001, 1.0, params0.w().clone()).unwrap(),
            })
        } else { None };
        let config = TrainConfig {
            regime, lr_w: lw, lr_v: lv,
            momentum: 0.9, max_iters: 20000, kkt_tol: 1e-10, checkpoint_every: 0,
            seed: Seed(seed), constraint, lambda_min_at_checkpoints: false,
        };
        let (p, t) = train(&params0, &data, &config).unwrap();
        let dist: f64 = p.w().data().iter().zip(params0.w().data())
            .map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let lam = p.jacobian_w(&data.x).unwrap().min_singular_value().unwrap();
        (t.relative_loss(), format!("lr=({lw:7.0e},{lv:7.0e}) rel={:9.2e} stop={:?} it={} dist={:.2} lam={:8.1e}",
            t.relative_loss(), t.stop_reason, t.iters, dist, lam))
    }).collect();
    results.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    println!("== {} n={n} d={d} m={m} eps={eps} seed={seed} ==", regime.name());
    for (_, r) in results.iter().take(3) { println!("{r}"); }
}
