use narrownet::*;
use narrownet::trainer::*;
use narrownet::constraints::ConstraintSpec;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let eps: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let iters: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200000);
    let lw: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let lv: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let (n, d, m) = (200, 50, 8);
    let data = make_synthetic(n, d, Seed(0));
    let params0 = mirrored_lecun_init(d, m, HeadKind::Paired, Activation::Tanh, Seed(1)).unwrap();
    let spec = ConstraintSpec::new(eps, 0.001, 1.0, params0.w().clone()).unwrap();
    let config = TrainConfig {
        regime: Regime::MirroredPgd, lr_w: lw, lr_v: lv,
        momentum: 0.9, max_iters: iters, kkt_tol: 1e-10, checkpoint_every: iters/10,
        seed: Seed(0), constraint: Some(spec), lambda_min_at_checkpoints: false,
    };
    let (p, t) = train(&params0, &data, &config).unwrap();
    for c in &t.checkpoints {
        println!("iter {:>7}: rel {:9.2e} gmap {:9.2e}", c.iter, c.loss / t.loss_init, c.grad_mapping_norm);
    }
    println!("eps={eps} lr=({lw},{lv}) final rel={:.2e} stop={:?} v0={:.2} vhits={}", t.relative_loss(), t.stop_reason, p.v()[0], t.v_boundary_hits);
}
