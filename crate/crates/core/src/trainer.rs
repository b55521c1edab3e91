//! The optimization loop: full-batch gradient descent with momentum, run
//! either unconstrained (regular regime) or with per-step projections of the
//! outer weights and hidden weights (constrained regimes), recording a
//! per-checkpoint trace.
//!
//! Composition rules are fixed: momentum buffers accumulate raw gradients
//! and are never projected; only the parameters are. Within one iteration
//! the outer weights are updated and projected before the hidden weights.
//! The stationarity measure is the gradient-mapping norm probed with the
//! hidden-weight step size; it reuses the gradient already computed for the
//! step, so checking it every iteration is free.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    gradient_mapping_norm, is_feasible, project_v_inplace, project_w_inplace, ConstraintSpec,
};
use crate::dataset::Dataset;
use crate::init::Seed;
use crate::linalg::LinalgError;
use crate::model::{HeadKind, ModelError, Params};
use crate::objective::{loss_and_grad_into, Gradients, Workspace};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("regime {0:?} projects and needs a constraint specification")]
    MissingConstraint(Regime),
    #[error("regime {0:?} is unconstrained and must not carry a constraint")]
    UnexpectedConstraint(Regime),
    #[error("regime {regime:?} requires the {expected:?} head, got {got:?}")]
    HeadMismatch {
        regime: Regime,
        expected: HeadKind,
        got: HeadKind,
    },
    #[error("mirrored_pgd must start from mirrored weights (unit j+m/2 equal to unit j)")]
    NotMirrored,
    #[error("learning rates must be positive, got lr_w = {lr_w}, lr_v = {lr_v}")]
    InvalidLearningRate { lr_w: f64, lr_v: f64 },
    #[error("momentum must lie in [0, 1), got {0}")]
    InvalidMomentum(f64),
    #[error("all {runs} grid runs diverged (non-finite); lr_w grid {lr_w:?}, lr_v grid {lr_v:?}")]
    AllRunsNonFinite {
        runs: usize,
        lr_w: Vec<f64>,
        lr_v: Vec<f64>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Training regimes. `MirroredPgd` is the constrained regime: paired head,
/// mirrored initialization, projections each step. `RegularGd` is plain
/// unconstrained descent from a regular initialization. `RegularPgdAblation`
/// keeps the plain head and regular initialization but bolts the
/// hidden-weight ball constraint on top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    MirroredPgd,
    RegularGd,
    RegularPgdAblation,
}

impl Regime {
    pub fn projects(self) -> bool {
        matches!(self, Regime::MirroredPgd | Regime::RegularPgdAblation)
    }

    pub fn expected_head(self) -> HeadKind {
        match self {
            Regime::MirroredPgd => HeadKind::Paired,
            Regime::RegularGd | Regime::RegularPgdAblation => HeadKind::Plain,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::MirroredPgd => "mirrored_pgd",
            Regime::RegularGd => "regular_gd",
            Regime::RegularPgdAblation => "regular_pgd_ablation",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub regime: Regime,
    pub lr_w: f64,
    pub lr_v: f64,
    pub momentum: f64,
    pub max_iters: usize,
    pub kkt_tol: f64,
    /// Checkpoint cadence in iterations; 0 picks max(1, max_iters/20).
    pub checkpoint_every: usize,
    /// Recorded for provenance; the loop itself draws no randomness.
    pub seed: Seed,
    pub constraint: Option<ConstraintSpec>,
    /// σ_min(J) is the dominant cost; grid search turns it off and computes
    /// it once at the selected endpoint.
    pub lambda_min_at_checkpoints: bool,
}

impl TrainConfig {
    pub fn validate(&self, params0: &Params) -> Result<(), TrainError> {
        if !(self.lr_w > 0.0) || !(self.lr_v > 0.0) {
            return Err(TrainError::InvalidLearningRate {
                lr_w: self.lr_w,
                lr_v: self.lr_v,
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::InvalidMomentum(self.momentum));
        }
        if self.regime.projects() && self.constraint.is_none() {
            return Err(TrainError::MissingConstraint(self.regime));
        }
        if !self.regime.projects() && self.constraint.is_some() {
            return Err(TrainError::UnexpectedConstraint(self.regime));
        }
        let expected = self.regime.expected_head();
        if params0.head() != expected {
            return Err(TrainError::HeadMismatch {
                regime: self.regime,
                expected,
                got: params0.head(),
            });
        }
        if self.regime == Regime::MirroredPgd {
            let (d, m) = (params0.input_dim(), params0.width());
            for j in 0..m / 2 {
                for k in 0..d {
                    if params0.w()[(k, j)] != params0.w()[(k, j + m / 2)] {
                        return Err(TrainError::NotMirrored);
                    }
                }
            }
        }
        Ok(())
    }

    fn cadence(&self) -> usize {
        if self.checkpoint_every > 0 {
            self.checkpoint_every
        } else {
            (self.max_iters / 20).max(1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    KktTol,
    NonFinite,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxIters => "max_iters",
            StopReason::KktTol => "kkt_tol",
            StopReason::NonFinite => "non_finite",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Checkpoint {
    pub iter: usize,
    pub loss: f64,
    pub grad_mapping_norm: f64,
    pub lambda_min: Option<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub checkpoints: Vec<Checkpoint>,
    pub stop_reason: StopReason,
    /// Parameter updates actually applied.
    pub iters: usize,
    pub loss_init: f64,
    pub loss_final: f64,
    pub kkt_residual_final: f64,
    /// Iterations where the ball projection actually moved the hidden
    /// weights.
    pub proj_w_activations: u64,
    /// Iterations where the ζ-floor fired on some outer weight, i.e. the
    /// iterate touched the v-boundary. The feasibility-restoring projection
    /// before the first iteration of mirrored_pgd is not counted.
    pub v_boundary_hits: u64,
}

impl TrainTrace {
    pub fn relative_loss(&self) -> f64 {
        self.loss_final / self.loss_init
    }
}

/// Runs the configured regime from `params0` and returns the final
/// parameters with the recorded trace. Non-finite loss or gradients stop the
/// run with a partial trace rather than an error, so grid search can prune
/// divergent step sizes.
pub fn train(
    params0: &Params,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(Params, TrainTrace), TrainError> {
    config.validate(params0)?;
    // The ablation bolts the hidden-weight ball onto regular training; its
    // outer weights stay unconstrained no matter what the spec carries.
    let ablation_spec = (config.regime == Regime::RegularPgdAblation)
        .then(|| config.constraint.as_ref().map(|s| s.as_ball_only()))
        .flatten();
    let spec = ablation_spec.as_ref().or(config.constraint.as_ref());
    let cadence = config.cadence();

    let mut params = params0.clone();
    if config.regime == Regime::MirroredPgd {
        // The paired head's v may start negative; restore feasibility before
        // iteration 0 so every recorded iterate is feasible.
        project_v_inplace(params.v_mut(), spec.expect("validated"));
    }

    let mut grads = Gradients::zeros_like(&params);
    let mut ws = Workspace::for_params(&params);
    let mut buf_w = vec![0.0; params.w().data().len()];
    let mut buf_v = vec![0.0; params.v().len()];

    let mut trace = TrainTrace {
        checkpoints: Vec::new(),
        stop_reason: StopReason::MaxIters,
        iters: 0,
        loss_init: f64::NAN,
        loss_final: f64::NAN,
        kkt_residual_final: f64::NAN,
        proj_w_activations: 0,
        v_boundary_hits: 0,
    };

    let push_checkpoint =
        |trace: &mut TrainTrace, params: &Params, iter: usize, loss: f64, residual: f64| -> Result<(), TrainError> {
            if let Some(last) = trace.checkpoints.last() {
                if last.iter == iter {
                    return Ok(());
                }
            }
            let lambda_min = if config.lambda_min_at_checkpoints {
                Some(params.jacobian_w(&data.x)?.min_singular_value()?)
            } else {
                None
            };
            let feasible = spec.map_or(true, |s| is_feasible(params, s).feasible);
            trace.checkpoints.push(Checkpoint {
                iter,
                loss,
                grad_mapping_norm: residual,
                lambda_min,
                feasible,
            });
            Ok(())
        };

    for t in 0..=config.max_iters {
        let loss = loss_and_grad_into(&params, data, &mut ws, &mut grads)?;
        if !loss.is_finite() || !grads.is_finite() {
            trace.stop_reason = StopReason::NonFinite;
            trace.iters = t;
            return Ok((params, trace));
        }
        let residual = gradient_mapping_norm(&params, &grads, spec, config.lr_w);
        if t == 0 {
            trace.loss_init = loss;
        }
        trace.loss_final = loss;
        trace.kkt_residual_final = residual;

        let converged = residual <= config.kkt_tol;
        if t % cadence == 0 || converged || t == config.max_iters {
            push_checkpoint(&mut trace, &params, t, loss, residual)?;
        }
        if converged {
            trace.stop_reason = StopReason::KktTol;
            trace.iters = t;
            return Ok((params, trace));
        }
        if t == config.max_iters {
            break;
        }

        // Momentum on the raw gradients, then the step, then projections:
        // outer weights first, hidden weights second.
        for (b, &g) in buf_v.iter_mut().zip(grads.grad_v.data()) {
            *b = config.momentum * *b + g;
        }
        for (p, &b) in params.v_mut().data_mut().iter_mut().zip(buf_v.iter()) {
            *p -= config.lr_v * b;
        }
        for (b, &g) in buf_w.iter_mut().zip(grads.grad_w.data()) {
            *b = config.momentum * *b + g;
        }
        for (p, &b) in params.w_mut().data_mut().iter_mut().zip(buf_w.iter()) {
            *p -= config.lr_w * b;
        }
        if let Some(spec) = spec {
            let effect = project_v_inplace(params.v_mut(), spec);
            if effect.floor_clamped {
                trace.v_boundary_hits += 1;
            }
            if project_w_inplace(params.w_mut(), spec) {
                trace.proj_w_activations += 1;
            }
        }
        trace.iters = t + 1;
    }

    trace.stop_reason = StopReason::MaxIters;
    Ok((params, trace))
}

/// Outcome of a grid search: the winning run and the step sizes that
/// produced it.
#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub params: Params,
    pub trace: TrainTrace,
    pub lr_w: f64,
    pub lr_v: f64,
}

/// Trains one run per (lr_w, lr_v) pair, all from the same `params0`, and
/// returns the run with the smallest final loss. Ties break toward the
/// smaller final gradient-mapping residual, then the smaller lr_w, then the
/// smaller lr_v, so the selection is deterministic. Divergent runs are
/// skipped; if every pair diverges the whole grid is reported.
pub fn best_of_grid(
    params0: &Params,
    data: &Dataset,
    base_config: &TrainConfig,
    lr_grid_w: &[f64],
    lr_grid_v: &[f64],
) -> Result<GridSearchOutcome, TrainError> {
    assert!(
        !lr_grid_w.is_empty() && !lr_grid_v.is_empty(),
        "learning-rate grids must be nonempty"
    );
    let pairs: Vec<(f64, f64)> = lr_grid_w
        .iter()
        .flat_map(|&lw| lr_grid_v.iter().map(move |&lv| (lw, lv)))
        .collect();

    let results: Vec<Result<(f64, f64, Params, TrainTrace), TrainError>> = pairs
        .par_iter()
        .map(|&(lr_w, lr_v)| {
            let config = TrainConfig {
                lr_w,
                lr_v,
                constraint: base_config.constraint.clone(),
                ..*base_config
            };
            let (params, trace) = train(params0, data, &config)?;
            Ok((lr_w, lr_v, params, trace))
        })
        .collect();

    let mut best: Option<(f64, f64, Params, TrainTrace)> = None;
    for res in results {
        let (lr_w, lr_v, params, trace) = res?;
        if trace.stop_reason == StopReason::NonFinite || !trace.loss_final.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((b_lw, b_lv, _, b_trace)) => {
                let key = (
                    trace.loss_final,
                    trace.kkt_residual_final,
                    lr_w,
                    lr_v,
                );
                let best_key = (b_trace.loss_final, b_trace.kkt_residual_final, *b_lw, *b_lv);
                key.partial_cmp(&best_key) == Some(std::cmp::Ordering::Less)
            }
        };
        if better {
            best = Some((lr_w, lr_v, params, trace));
        }
    }

    match best {
        Some((lr_w, lr_v, params, trace)) => Ok(GridSearchOutcome {
            params,
            trace,
            lr_w,
            lr_v,
        }),
        None => Err(TrainError::AllRunsNonFinite {
            runs: pairs.len(),
            lr_w: lr_grid_w.to_vec(),
            lr_v: lr_grid_v.to_vec(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::project_v;
    use crate::dataset::{make_synthetic, Provenance};
    use crate::init::{mirrored_lecun_init, GaussianStream};
    use crate::linalg::{DenseMatrix, DenseVector};
    use crate::model::Activation;

    fn base_config(regime: Regime, constraint: Option<ConstraintSpec>) -> TrainConfig {
        TrainConfig {
            regime,
            lr_w: 0.05,
            lr_v: 0.05,
            momentum: 0.9,
            max_iters: 500,
            kkt_tol: 1e-10,
            checkpoint_every: 0,
            seed: Seed(0),
            constraint,
            lambda_min_at_checkpoints: false,
        }
    }

    fn default_spec(anchor: &DenseMatrix) -> ConstraintSpec {
        ConstraintSpec::new(1.0, 0.001, 1.0, anchor.clone()).unwrap()
    }

    #[test]
    fn starting_at_global_min_stops_immediately() {
        // With mirrored init the zero-target dataset is already solved.
        let params0 =
            mirrored_lecun_init(4, 6, HeadKind::Paired, Activation::Tanh, Seed(1)).unwrap();
        let mut data = make_synthetic(8, 4, Seed(2));
        data.y = DenseVector::zeros(8);
        let config = base_config(Regime::MirroredPgd, Some(default_spec(params0.w())));
        let (_, trace) = train(&params0, &data, &config).unwrap();
        assert_eq!(trace.stop_reason, StopReason::KktTol);
        assert!(trace.iters <= 1);
        assert_eq!(trace.loss_final, 0.0);
        assert_eq!(trace.kkt_residual_final, 0.0);
    }

    #[test]
    fn single_step_matches_hand_simulated_update() {
        // d=1, m=2 paired instance, momentum 0, one tiny step.
        let w = DenseMatrix::from_vec(1, 2, vec![0.4, 0.4]);
        let v = DenseVector::new(vec![0.3]);
        let params0 = Params::new(w, v, HeadKind::Paired, Activation::Tanh).unwrap();
        let x = DenseMatrix::from_vec(2, 1, vec![0.7, -1.1]);
        let y = DenseVector::new(vec![0.5, 0.2]);
        let data = Dataset {
            x: x.clone(),
            y: y.clone(),
            provenance: Provenance {
                generator: "test".into(),
                seed: Seed(0),
            },
        };
        let spec = ConstraintSpec::new(10.0, 0.001, 1.0, params0.w().clone()).unwrap();
        let lr = 1e-3;
        let config = TrainConfig {
            regime: Regime::MirroredPgd,
            lr_w: lr,
            lr_v: lr,
            momentum: 0.0,
            max_iters: 1,
            kkt_tol: 0.0,
            checkpoint_every: 0,
            seed: Seed(0),
            constraint: Some(spec.clone()),
            lambda_min_at_checkpoints: false,
        };
        let (got, trace) = train(&params0, &data, &config).unwrap();
        assert_eq!(trace.iters, 1);

        // Hand oracle. v is projected before iteration 0 (no-op here since
        // 0.3 >= zeta and the singleton ratio is 1).
        let v0 = project_v(params0.v(), &spec);
        let act = Activation::Tanh;
        let mut gw = vec![0.0; 2];
        let mut gv = 0.0;
        for i in 0..2 {
            let xi = x[(i, 0)];
            let z1 = params0.w()[(0, 0)] * xi;
            let z2 = params0.w()[(0, 1)] * xi;
            let f = v0[0] * (act.value(z1) - act.value(z2));
            let r = f - y[i];
            gv += r * (act.value(z1) - act.value(z2));
            gw[0] += r * v0[0] * act.derivative(z1) * xi;
            gw[1] += -r * v0[0] * act.derivative(z2) * xi;
        }
        let want_w = [
            params0.w()[(0, 0)] - lr * gw[0],
            params0.w()[(0, 1)] - lr * gw[1],
        ];
        let want_v = (v0[0] - lr * gv).max(spec.zeta());
        assert!((got.w()[(0, 0)] - want_w[0]).abs() <= 1e-12);
        assert!((got.w()[(0, 1)] - want_w[1]).abs() <= 1e-12);
        assert!((got.v()[0] - want_v).abs() <= 1e-12);
    }

    #[test]
    fn mirrored_pgd_grid_reduces_loss_on_small_synthetic_instance() {
        let (n, d, m) = (30, 10, 6);
        let data = make_synthetic(n, d, Seed(3));
        let params0 =
            mirrored_lecun_init(d, m, HeadKind::Paired, Activation::Tanh, Seed(4)).unwrap();
        let spec = ConstraintSpec::new(50.0, 0.001, 1.0, params0.w().clone()).unwrap();
        let mut config = base_config(Regime::MirroredPgd, Some(spec));
        config.max_iters = 3000;
        let grid = [1e-3, 1e-2, 5e-2, 1e-1];
        let outcome = best_of_grid(&params0, &data, &config, &grid, &grid).unwrap();
        assert!(
            outcome.trace.relative_loss() < 1e-2,
            "rel loss {}",
            outcome.trace.relative_loss()
        );
        // Every checkpoint of a projecting run is feasible.
        assert!(outcome.trace.checkpoints.iter().all(|c| c.feasible));
        let report = is_feasible(&outcome.params, config.constraint.as_ref().unwrap());
        assert!(report.feasible);
    }

    #[test]
    fn momentum_free_small_steps_are_monotone() {
        let (n, d, m) = (20, 8, 4);
        let data = make_synthetic(n, d, Seed(5));
        let params0 =
            mirrored_lecun_init(d, m, HeadKind::Paired, Activation::Tanh, Seed(6)).unwrap();
        let mut config = base_config(Regime::MirroredPgd, Some(default_spec(params0.w())));
        config.momentum = 0.0;
        config.lr_w = 0.01;
        config.lr_v = 0.01;
        config.max_iters = 400;
        config.checkpoint_every = 20;
        let (_, trace) = train(&params0, &data, &config).unwrap();
        for pair in trace.checkpoints.windows(2) {
            assert!(
                pair[1].loss <= pair[0].loss * (1.0 + 1e-12),
                "loss rose from {} to {}",
                pair[0].loss,
                pair[1].loss
            );
        }
    }

    #[test]
    fn huge_ball_never_activates_projection() {
        let (n, d, m) = (20, 8, 4);
        let data = make_synthetic(n, d, Seed(7));
        let params0 =
            mirrored_lecun_init(d, m, HeadKind::Paired, Activation::Tanh, Seed(8)).unwrap();
        let spec = ConstraintSpec::new(1000.0, 0.001, 1.0, params0.w().clone()).unwrap();
        let mut config = base_config(Regime::MirroredPgd, Some(spec));
        config.max_iters = 300;
        let (_, trace) = train(&params0, &data, &config).unwrap();
        assert_eq!(trace.proj_w_activations, 0);
    }

    #[test]
    fn non_finite_stop_reports_partial_trace() {
        let (n, d, m) = (20, 8, 4);
        let data = make_synthetic(n, d, Seed(9));
        let params0 =
            crate::init::lecun_init(d, m, HeadKind::Plain, Activation::Tanh, Seed(10)).unwrap();
        let mut config = base_config(Regime::RegularGd, None);
        config.lr_w = 1e12;
        config.lr_v = 1e12;
        config.max_iters = 2000;
        let (_, trace) = train(&params0, &data, &config).unwrap();
        assert_eq!(trace.stop_reason, StopReason::NonFinite);
        assert!(trace.iters < 2000);
        assert!(trace.checkpoints.iter().all(|c| c.loss.is_finite()));
    }

    #[test]
    fn regime_preconditions_enforced() {
        let paired =
            mirrored_lecun_init(4, 6, HeadKind::Paired, Activation::Tanh, Seed(11)).unwrap();
        let plain = crate::init::lecun_init(4, 6, HeadKind::Plain, Activation::Tanh, Seed(12))
            .unwrap();
        let data = make_synthetic(5, 4, Seed(13));
        let spec = default_spec(paired.w());

        // Missing constraint.
        let config = base_config(Regime::MirroredPgd, None);
        assert!(matches!(
            train(&paired, &data, &config),
            Err(TrainError::MissingConstraint(_))
        ));
        // Wrong head.
        let config = base_config(Regime::RegularGd, None);
        assert!(matches!(
            train(&paired, &data, &config),
            Err(TrainError::HeadMismatch { .. })
        ));
        // Constraint on the unconstrained regime.
        let config = base_config(Regime::RegularGd, Some(spec.clone()));
        assert!(matches!(
            train(&plain, &data, &config),
            Err(TrainError::UnexpectedConstraint(_))
        ));
        // Non-mirrored start for mirrored_pgd.
        let mut broken = paired.clone();
        broken.w_mut()[(0, 5)] += 0.1;
        let config = base_config(Regime::MirroredPgd, Some(spec));
        assert!(matches!(
            train(&broken, &data, &config),
            Err(TrainError::NotMirrored)
        ));
    }

    #[test]
    fn determinism_identical_config_identical_loss_bits() {
        let (n, d, m) = (20, 8, 4);
        let data = make_synthetic(n, d, Seed(14));
        let params0 =
            mirrored_lecun_init(d, m, HeadKind::Paired, Activation::Tanh, Seed(15)).unwrap();
        let mut config = base_config(Regime::MirroredPgd, Some(default_spec(params0.w())));
        config.max_iters = 200;
        let (pa, ta) = train(&params0, &data, &config).unwrap();
        let (pb, tb) = train(&params0, &data, &config).unwrap();
        assert_eq!(ta.loss_final.to_bits(), tb.loss_final.to_bits());
        assert_eq!(pa, pb);
    }

    #[test]
    fn singleton_grid_equals_plain_train() {
        let (n, d, m) = (15, 6, 4);
        let data = make_synthetic(n, d, Seed(16));
        let params0 =
            mirrored_lecun_init(d, m, HeadKind::Paired, Activation::Tanh, Seed(17)).unwrap();
        let mut config = base_config(Regime::MirroredPgd, Some(default_spec(params0.w())));
        config.max_iters = 150;
        let outcome = best_of_grid(&params0, &data, &config, &[config.lr_w], &[config.lr_v])
            .unwrap();
        let (params, trace) = train(&params0, &data, &config).unwrap();
        assert_eq!(outcome.params, params);
        assert_eq!(outcome.trace.loss_final.to_bits(), trace.loss_final.to_bits());
    }

    #[test]
    fn grid_skips_divergent_cell_and_keeps_convergent_one() {
        let (n, d, m) = (15, 6, 4);
        let data = make_synthetic(n, d, Seed(18));
        let params0 =
            mirrored_lecun_init(d, m, HeadKind::Paired, Activation::Tanh, Seed(19)).unwrap();
        let mut config = base_config(Regime::MirroredPgd, Some(default_spec(params0.w())));
        config.max_iters = 150;
        let outcome = best_of_grid(&params0, &data, &config, &[1e15, 0.05], &[0.05]).unwrap();
        assert_eq!(outcome.lr_w, 0.05);
        assert_ne!(outcome.trace.stop_reason, StopReason::NonFinite);
    }

    #[test]
    fn grid_with_all_divergent_cells_errors_with_grid_listing() {
        // Unconstrained regime: nothing bounds the huge steps, so every run
        // genuinely blows up to non-finite values.
        let (n, d, m) = (15, 6, 4);
        let data = make_synthetic(n, d, Seed(20));
        let params0 =
            crate::init::lecun_init(d, m, HeadKind::Plain, Activation::Tanh, Seed(21)).unwrap();
        let mut config = base_config(Regime::RegularGd, None);
        config.max_iters = 500;
        let err = best_of_grid(&params0, &data, &config, &[1e15], &[1e15]).unwrap_err();
        assert!(err.to_string().contains("1e15") || err.to_string().contains("1000000000000000"));
    }

    #[test]
    fn kkt_residual_nonincreasing_along_converging_run() {
        // The monotonicity invariant is stated for converging runs, so give
        // the instance enough width and enough iterations to converge.
        let (n, d, m) = (20, 8, 6);
        let data = make_synthetic(n, d, Seed(22));
        let params0 =
            mirrored_lecun_init(d, m, HeadKind::Paired, Activation::Tanh, Seed(23)).unwrap();
        let spec = ConstraintSpec::new(50.0, 0.001, 1.0, params0.w().clone()).unwrap();
        let mut config = base_config(Regime::MirroredPgd, Some(spec));
        config.momentum = 0.0;
        config.lr_w = 0.1;
        config.lr_v = 0.1;
        config.max_iters = 20_000;
        config.checkpoint_every = 1000;
        let (_, trace) = train(&params0, &data, &config).unwrap();
        assert!(
            trace.relative_loss() < 1e-3,
            "run did not converge: rel loss {}",
            trace.relative_loss()
        );
        let pairs = trace.checkpoints.windows(2).count();
        let decreasing = trace
            .checkpoints
            .windows(2)
            .filter(|p| p[1].grad_mapping_norm <= p[0].grad_mapping_norm * (1.0 + 1e-9))
            .count();
        assert!(
            decreasing as f64 >= 0.9 * pairs as f64,
            "{decreasing}/{pairs} non-increasing checkpoint pairs"
        );
    }
}
