//! The feasible sets of the constrained problem and their projections: a
//! Frobenius ball of radius ε around the initial hidden weights, and the
//! outer-weight set {v ≥ ζ·1, max(v)/min(v) ≤ κ}, plus the gradient-mapping
//! residual that certifies approximate KKT points.
//!
//! `project_v` is a feasibility-restoring clamp, not the exact Euclidean
//! projection onto the ratio-constrained set: it floors every entry at ζ and
//! then lowers every entry above κ·min(v) to κ·min(v). All violating entries
//! are clamped in one call, which makes the output-feasibility invariant
//! testable.

use thiserror::Error;

use crate::dataset::Dataset;
use crate::linalg::{DenseMatrix, DenseVector};
use crate::model::{ModelError, Params};
use crate::objective::{self, Gradients};

/// Relative slack used by feasibility checks; covers projection round-off.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("zeta must be positive, got {0}")]
    InvalidZeta(f64),
    #[error("kappa must be >= 1 (or infinite for unbounded), got {0}")]
    InvalidKappa(f64),
    #[error("weights are {got_rows}x{got_cols} but the anchor is {anchor_rows}x{anchor_cols}")]
    AnchorShapeMismatch {
        anchor_rows: usize,
        anchor_cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
}

/// Constraint parameters: Frobenius radius ε around the anchor weights,
/// outer-weight floor ζ, and ratio cap κ (`f64::INFINITY` disables the cap).
///
/// [`ConstraintSpec::ball_only`] builds the ablation variant that constrains
/// the hidden weights only: the outer-weight set is dropped entirely, as in
/// regular training with the ball bolted on.
#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    epsilon: f64,
    zeta: f64,
    kappa: f64,
    constrain_outer: bool,
    anchor_w0: DenseMatrix,
}

impl ConstraintSpec {
    pub fn new(
        epsilon: f64,
        zeta: f64,
        kappa: f64,
        anchor_w0: DenseMatrix,
    ) -> Result<Self, ConstraintError> {
        if !(epsilon > 0.0) {
            return Err(ConstraintError::InvalidEpsilon(epsilon));
        }
        if !(zeta > 0.0) {
            return Err(ConstraintError::InvalidZeta(zeta));
        }
        if !(kappa >= 1.0) {
            return Err(ConstraintError::InvalidKappa(kappa));
        }
        Ok(Self {
            epsilon,
            zeta,
            kappa,
            constrain_outer: true,
            anchor_w0,
        })
    }

    /// Hidden-weight ball only; the outer weights stay unconstrained.
    pub fn ball_only(epsilon: f64, anchor_w0: DenseMatrix) -> Result<Self, ConstraintError> {
        if !(epsilon > 0.0) {
            return Err(ConstraintError::InvalidEpsilon(epsilon));
        }
        Ok(Self {
            epsilon,
            zeta: f64::MIN_POSITIVE,
            kappa: f64::INFINITY,
            constrain_outer: false,
            anchor_w0,
        })
    }

    pub fn constrains_outer(&self) -> bool {
        self.constrain_outer
    }

    /// A copy with the outer-weight constraints stripped.
    pub fn as_ball_only(&self) -> Self {
        let mut copy = self.clone();
        copy.constrain_outer = false;
        copy
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn anchor_w0(&self) -> &DenseMatrix {
        &self.anchor_w0
    }

    fn check_shape(&self, w: &DenseMatrix) -> Result<(), ConstraintError> {
        if w.rows() != self.anchor_w0.rows() || w.cols() != self.anchor_w0.cols() {
            return Err(ConstraintError::AnchorShapeMismatch {
                anchor_rows: self.anchor_w0.rows(),
                anchor_cols: self.anchor_w0.cols(),
                got_rows: w.rows(),
                got_cols: w.cols(),
            });
        }
        Ok(())
    }
}

fn distance_to_anchor(w: &DenseMatrix, spec: &ConstraintSpec) -> f64 {
    w.data()
        .iter()
        .zip(spec.anchor_w0.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean projection onto {‖w − w⁰‖_F ≤ ε}: interior points pass through
/// unchanged, exterior points are pulled radially onto the sphere.
pub fn project_w(w: &DenseMatrix, spec: &ConstraintSpec) -> Result<DenseMatrix, ConstraintError> {
    spec.check_shape(w)?;
    let mut out = w.clone();
    project_w_inplace(&mut out, spec);
    Ok(out)
}

/// In-place variant; returns whether the weights were altered.
///
/// The trigger carries the same relative slack as the feasibility check:
/// a point within round-off of the sphere is already a projection output,
/// and leaving it untouched keeps the projection bitwise idempotent.
pub fn project_w_inplace(w: &mut DenseMatrix, spec: &ConstraintSpec) -> bool {
    let dist = distance_to_anchor(w, spec);
    if dist <= spec.epsilon * (1.0 + FEASIBILITY_SLACK) {
        return false;
    }
    let scale = spec.epsilon / dist;
    for (wi, &ai) in w.data_mut().iter_mut().zip(spec.anchor_w0.data()) {
        *wi = ai + scale * (*wi - ai);
    }
    true
}

/// What [`project_v_inplace`] did to the vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VProjectionEffect {
    /// Some entry sat strictly below ζ and was floored — the iterate touched
    /// the ζ-boundary.
    pub floor_clamped: bool,
    /// The max/min ratio exceeded κ and entries were lowered.
    pub ratio_clamped: bool,
}

impl VProjectionEffect {
    pub fn changed(self) -> bool {
        self.floor_clamped || self.ratio_clamped
    }
}

/// Feasibility-restoring clamp for the outer weights: floor at ζ, then cap
/// every entry above κ·min(v) at κ·min(v).
pub fn project_v(v: &DenseVector, spec: &ConstraintSpec) -> DenseVector {
    let mut out = v.clone();
    project_v_inplace(&mut out, spec);
    out
}

/// In-place variant reporting which clamps fired. A ball-only spec leaves
/// the vector untouched.
pub fn project_v_inplace(v: &mut DenseVector, spec: &ConstraintSpec) -> VProjectionEffect {
    let mut effect = VProjectionEffect::default();
    if !spec.constrain_outer {
        return effect;
    }
    for vi in v.data_mut() {
        if *vi < spec.zeta {
            *vi = spec.zeta;
            effect.floor_clamped = true;
        }
    }
    if spec.kappa.is_finite() {
        let min = v.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let cap = spec.kappa * min;
        for vi in v.data_mut() {
            if *vi > cap {
                *vi = cap;
                effect.ratio_clamped = true;
            }
        }
    }
    effect
}

/// Signed violations of each constraint; positive means infeasible by that
/// amount.
#[derive(Debug, Clone, Copy)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// ‖w − w⁰‖_F − ε.
    pub w_violation: f64,
    /// ζ − min(v).
    pub floor_violation: f64,
    /// max(v)/min(v) − κ, or 0 when κ is unbounded.
    pub ratio_violation: f64,
}

pub fn is_feasible(params: &Params, spec: &ConstraintSpec) -> FeasibilityReport {
    let w_dist = distance_to_anchor(params.w(), spec);
    let w_ok = w_dist <= spec.epsilon * (1.0 + FEASIBILITY_SLACK);

    if !spec.constrain_outer {
        return FeasibilityReport {
            feasible: w_ok,
            w_violation: w_dist - spec.epsilon,
            floor_violation: 0.0,
            ratio_violation: 0.0,
        };
    }

    let v = params.v().data();
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ratio = max / min;

    let floor_ok = min >= spec.zeta * (1.0 - FEASIBILITY_SLACK);
    let ratio_ok = !spec.kappa.is_finite() || ratio <= spec.kappa * (1.0 + FEASIBILITY_SLACK);

    FeasibilityReport {
        feasible: w_ok && floor_ok && ratio_ok,
        w_violation: w_dist - spec.epsilon,
        floor_violation: spec.zeta - min,
        ratio_violation: if spec.kappa.is_finite() {
            ratio - spec.kappa
        } else {
            0.0
        },
    }
}

/// Norm of the gradient mapping ‖θ − P_C(θ − s·g)‖ / s for an
/// already-computed gradient g. With `spec = None` the projection is the
/// identity and this reduces to ‖g‖.
pub fn gradient_mapping_norm(
    params: &Params,
    grads: &Gradients,
    spec: Option<&ConstraintSpec>,
    probe_step: f64,
) -> f64 {
    assert!(probe_step > 0.0, "probe step must be positive");
    match spec {
        None => grads.norm(),
        Some(spec) => {
            let mut w = params.w().clone();
            for (wi, gi) in w.data_mut().iter_mut().zip(grads.grad_w.data()) {
                *wi -= probe_step * gi;
            }
            project_w_inplace(&mut w, spec);

            let mut v = params.v().clone();
            for (vi, gi) in v.data_mut().iter_mut().zip(grads.grad_v.data()) {
                *vi -= probe_step * gi;
            }
            project_v_inplace(&mut v, spec);

            let mut sq = 0.0;
            for (a, b) in params.w().data().iter().zip(w.data()) {
                sq += (a - b) * (a - b);
            }
            for (a, b) in params.v().data().iter().zip(v.data()) {
                sq += (a - b) * (a - b);
            }
            sq.sqrt() / probe_step
        }
    }
}

/// Gradient-mapping residual at the current parameters: zero exactly when θ
/// is a fixed point of the projected gradient step with this step size.
pub fn kkt_residual(
    params: &Params,
    data: &Dataset,
    spec: Option<&ConstraintSpec>,
    probe_step: f64,
) -> Result<f64, ModelError> {
    let grads = objective::grad(params, data)?;
    Ok(gradient_mapping_norm(params, &grads, spec, probe_step))
}
