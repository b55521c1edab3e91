//! Empirical squared loss and its analytic gradients.
//!
//! Gradients come from the residual-weighted closed forms in a single
//! sample-by-sample pass; the full n×(m·d) Jacobian is never materialized
//! here (it is reserved for diagnostics). Accumulation is sequential, so
//! results are bit-reproducible regardless of caller threading.

use crate::dataset::Dataset;
use crate::linalg::{DenseMatrix, DenseVector};
use crate::model::{HeadKind, ModelError, Params};

/// Loss gradients with the same shapes as the parameters they refer to.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// d×m, column j is the gradient for hidden unit j.
    pub grad_w: DenseMatrix,
    /// Matches the free outer-weight vector length.
    pub grad_v: DenseVector,
}

impl Gradients {
    pub fn zeros_like(params: &Params) -> Self {
        Self {
            grad_w: DenseMatrix::zeros(params.input_dim(), params.width()),
            grad_v: DenseVector::zeros(params.v().len()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grad_w.is_finite() && self.grad_v.is_finite()
    }

    /// Euclidean norm over all coordinates of (grad_w, grad_v).
    pub fn norm(&self) -> f64 {
        let w: f64 = self.grad_w.data().iter().map(|x| x * x).sum();
        let v: f64 = self.grad_v.data().iter().map(|x| x * x).sum();
        (w + v).sqrt()
    }
}

/// Reusable per-sample buffers for the fused loss+gradient pass.
pub struct Workspace {
    z_row: Vec<f64>,
    sig_row: Vec<f64>,
    dsig_row: Vec<f64>,
}

impl Workspace {
    pub fn for_params(params: &Params) -> Self {
        let m = params.width();
        Self {
            z_row: vec![0.0; m],
            sig_row: vec![0.0; m],
            dsig_row: vec![0.0; m],
        }
    }
}

fn check_dims(params: &Params, data: &Dataset) -> Result<(), ModelError> {
    if data.d() != params.input_dim() {
        return Err(ModelError::InputDimMismatch {
            expected: params.input_dim(),
            got: data.d(),
        });
    }
    if data.y.len() != data.n() {
        return Err(ModelError::TargetLenMismatch {
            expected: data.n(),
            got: data.y.len(),
        });
    }
    Ok(())
}

/// ½ Σᵢ (yᵢ − f(xᵢ))².
pub fn loss(params: &Params, data: &Dataset) -> Result<f64, ModelError> {
    check_dims(params, data)?;
    let f = params.forward(&data.x)?;
    let mut acc = 0.0;
    for i in 0..data.n() {
        let r = f[i] - data.y[i];
        acc += r * r;
    }
    Ok(0.5 * acc)
}

/// Analytic gradients of [`loss`] with respect to w and v.
pub fn grad(params: &Params, data: &Dataset) -> Result<Gradients, ModelError> {
    let mut grads = Gradients::zeros_like(params);
    let mut ws = Workspace::for_params(params);
    loss_and_grad_into(params, data, &mut ws, &mut grads)?;
    Ok(grads)
}

/// Loss and gradients in one pass.
pub fn loss_and_grad(params: &Params, data: &Dataset) -> Result<(f64, Gradients), ModelError> {
    let mut grads = Gradients::zeros_like(params);
    let mut ws = Workspace::for_params(params);
    let loss = loss_and_grad_into(params, data, &mut ws, &mut grads)?;
    Ok((loss, grads))
}

/// Fused pass used by the training loop: one sweep over the samples computes
/// the loss, grad_w and grad_v without heap allocation. `grads` is
/// overwritten.
pub fn loss_and_grad_into(
    params: &Params,
    data: &Dataset,
    ws: &mut Workspace,
    grads: &mut Gradients,
) -> Result<f64, ModelError> {
    check_dims(params, data)?;
    let (n, m) = (data.n(), params.width());
    let half = m / 2;
    let act = params.activation();
    let head = params.head();
    let w = params.w().data();
    let v = params.v().data();

    grads.grad_w.data_mut().fill(0.0);
    grads.grad_v.data_mut().fill(0.0);
    let gw = grads.grad_w.data_mut();
    let gv = grads.grad_v.data_mut();

    let mut loss_acc = 0.0;
    for i in 0..n {
        let xi = data.x.row(i);

        // z_i = w·x_i, inner loop contiguous over units.
        ws.z_row.fill(0.0);
        for (k, &xik) in xi.iter().enumerate() {
            if xik == 0.0 {
                continue;
            }
            let wk = &w[k * m..(k + 1) * m];
            for (zj, &wkj) in ws.z_row.iter_mut().zip(wk) {
                *zj += xik * wkj;
            }
        }

        for j in 0..m {
            let (s, ds) = act.value_and_derivative(ws.z_row[j]);
            ws.sig_row[j] = s;
            ws.dsig_row[j] = ds;
        }

        // Output and residual for this sample.
        let f_i = match head {
            HeadKind::Plain => ws.sig_row.iter().zip(v).map(|(s, vj)| s * vj).sum::<f64>(),
            HeadKind::Paired => (0..half)
                .map(|j| v[j] * (ws.sig_row[j] - ws.sig_row[j + half]))
                .sum::<f64>(),
        };
        let r = f_i - data.y[i];
        loss_acc += r * r;

        // grad_v += r · φ_i ; scale dsig into the Jacobian row coefficients.
        match head {
            HeadKind::Plain => {
                for j in 0..m {
                    gv[j] += r * ws.sig_row[j];
                    ws.dsig_row[j] *= r * v[j];
                }
            }
            HeadKind::Paired => {
                for j in 0..half {
                    gv[j] += r * (ws.sig_row[j] - ws.sig_row[j + half]);
                    ws.dsig_row[j] *= r * v[j];
                    ws.dsig_row[j + half] *= -r * v[j];
                }
            }
        }

        // grad_w += x_i ⊗ t_i, inner loop contiguous over units.
        for (k, &xik) in xi.iter().enumerate() {
            if xik == 0.0 {
                continue;
            }
            let gwk = &mut gw[k * m..(k + 1) * m];
            for (g, &t) in gwk.iter_mut().zip(ws.dsig_row.iter()) {
                *g += xik * t;
            }
        }
    }

    Ok(0.5 * loss_acc)
}
