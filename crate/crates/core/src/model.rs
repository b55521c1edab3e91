//! Network definition and its first-order structure: forward evaluation, the
//! hidden feature matrix, and the Jacobian of the outputs with respect to the
//! hidden weights, for both the plain and the paired output head.
//!
//! The flattened hidden-weight layout is fixed crate-wide: vec(w) is the
//! columns (w_1, w_2, ..., w_m) concatenated, each of length d. Jacobian
//! column block j (width d) belongs to hidden unit j.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{DenseMatrix, DenseVector};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has {got} columns but the network expects input dimension {expected}")]
    InputDimMismatch { expected: usize, got: usize },
    #[error("width m is an even number for the paired head; got m = {m}")]
    OddPairedWidth { m: usize },
    #[error("outer weight vector has length {got}, expected {expected} for {head:?} head of width {m}")]
    OuterLenMismatch {
        head: HeadKind,
        m: usize,
        expected: usize,
        got: usize,
    },
    #[error(
        "square sub-Jacobian needs n <= m*d/2 so it only touches first-half units; \
         got n = {n}, m*d/2 = {half}"
    )]
    SubJacobianTooManySamples { n: usize, half: usize },
    #[error("target vector has length {got} but the input has {expected} rows")]
    TargetLenMismatch { expected: usize, got: usize },
}

/// Smooth activation functions. ReLU is deliberately absent: the landscape
/// diagnostics rely on smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softplus,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Tanh, Activation::Sigmoid, Activation::Softplus];

    pub fn value(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => logistic(z),
            Activation::Softplus => softplus(z),
        }
    }

    /// Analytic derivative. Never computed by internal differencing, so the
    /// finite-difference test oracles stay independent.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = logistic(z);
                s * (1.0 - s)
            }
            Activation::Softplus => logistic(z),
        }
    }

    /// Value and derivative from a single transcendental evaluation.
    #[inline]
    pub fn value_and_derivative(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                (t, 1.0 - t * t)
            }
            Activation::Sigmoid => {
                let s = logistic(z);
                (s, s * (1.0 - s))
            }
            Activation::Softplus => {
                let s = logistic(z);
                (softplus(z), s)
            }
        }
    }

    /// Whether {z : σ(z) = 0} = {0}. Holds for tanh only; sigmoid and
    /// softplus are still offered but validation emits a warning instead of
    /// an error.
    pub fn zero_set_is_origin(self) -> bool {
        matches!(self, Activation::Tanh)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
        }
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Output-head wiring.
///
/// `Plain` is the ordinary sum over m hidden units with m free outer weights.
/// `Paired` stores only m/2 free outer weights; unit j and unit j+m/2 share
/// weight v_j with opposite signs, so the negation is structural.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Plain,
    Paired,
}

/// Trainable parameters: hidden weights `w` (d×m, column j is unit j's
/// incoming weight vector), outer weights `v`, head kind, and activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    w: DenseMatrix,
    v: DenseVector,
    head: HeadKind,
    activation: Activation,
}

impl Params {
    pub fn new(
        w: DenseMatrix,
        v: DenseVector,
        head: HeadKind,
        activation: Activation,
    ) -> Result<Self, ModelError> {
        let m = w.cols();
        if head == HeadKind::Paired && m % 2 != 0 {
            return Err(ModelError::OddPairedWidth { m });
        }
        let expected = match head {
            HeadKind::Plain => m,
            HeadKind::Paired => m / 2,
        };
        if v.len() != expected {
            return Err(ModelError::OuterLenMismatch {
                head,
                m,
                expected,
                got: v.len(),
            });
        }
        Ok(Self { w, v, head, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn width(&self) -> usize {
        self.w.cols()
    }

    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn w_mut(&mut self) -> &mut DenseMatrix {
        &mut self.w
    }

    pub fn v(&self) -> &DenseVector {
        &self.v
    }

    pub fn v_mut(&mut self) -> &mut DenseVector {
        &mut self.v
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.v.is_finite()
    }

    /// Outer coefficient of hidden unit j in the flattened network, folding
    /// the paired head's structural negation into the sign.
    pub fn unit_coefficient(&self, j: usize) -> f64 {
        match self.head {
            HeadKind::Plain => self.v[j],
            HeadKind::Paired => {
                let half = self.width() / 2;
                if j < half {
                    self.v[j]
                } else {
                    -self.v[j - half]
                }
            }
        }
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<(), ModelError> {
        if x.cols() != self.input_dim() {
            return Err(ModelError::InputDimMismatch {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Pre-activations x·w, one row per sample (n×m).
    pub(crate) fn preactivations(&self, x: &DenseMatrix) -> DenseMatrix {
        let (n, d, m) = (x.rows(), self.input_dim(), self.width());
        let mut z = DenseMatrix::zeros(n, m);
        let w = self.w.data();
        for i in 0..n {
            let xi = x.row(i);
            let zi = &mut z.data_mut()[i * m..(i + 1) * m];
            for k in 0..d {
                let xik = xi[k];
                if xik == 0.0 {
                    continue;
                }
                let wk = &w[k * m..(k + 1) * m];
                for (zj, &wkj) in zi.iter_mut().zip(wk) {
                    *zj += xik * wkj;
                }
            }
        }
        z
    }

    /// Network output, one entry per sample row of `x`.
    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseVector, ModelError> {
        self.check_input(x)?;
        let z = self.preactivations(x);
        let n = x.rows();
        let m = self.width();
        let half = m / 2;
        let mut out = DenseVector::zeros(n);
        for i in 0..n {
            let zi = z.row(i);
            let mut acc = 0.0;
            match self.head {
                HeadKind::Plain => {
                    for j in 0..m {
                        acc += self.v[j] * self.activation.value(zi[j]);
                    }
                }
                HeadKind::Paired => {
                    for j in 0..half {
                        acc += self.v[j]
                            * (self.activation.value(zi[j]) - self.activation.value(zi[j + half]));
                    }
                }
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Hidden feature matrix: n×m of σ(w_jᵀx_i) for the plain head, n×(m/2)
    /// of paired differences for the paired head. `forward` equals
    /// `feature_matrix · v` up to round-off.
    pub fn feature_matrix(&self, x: &DenseMatrix) -> Result<DenseMatrix, ModelError> {
        self.check_input(x)?;
        let z = self.preactivations(x);
        let n = x.rows();
        let m = self.width();
        match self.head {
            HeadKind::Plain => {
                let mut phi = DenseMatrix::zeros(n, m);
                for i in 0..n {
                    for j in 0..m {
                        phi[(i, j)] = self.activation.value(z[(i, j)]);
                    }
                }
                Ok(phi)
            }
            HeadKind::Paired => {
                let half = m / 2;
                let mut phi = DenseMatrix::zeros(n, half);
                for i in 0..n {
                    for j in 0..half {
                        phi[(i, j)] = self.activation.value(z[(i, j)])
                            - self.activation.value(z[(i, j + half)]);
                    }
                }
                Ok(phi)
            }
        }
    }

    /// Jacobian of the output vector with respect to the flattened hidden
    /// weights: n×(m·d), block j of row i equal to c_j σ'(w_jᵀx_i) x_iᵀ where
    /// c_j is [`Params::unit_coefficient`].
    pub fn jacobian_w(&self, x: &DenseMatrix) -> Result<DenseMatrix, ModelError> {
        self.check_input(x)?;
        let z = self.preactivations(x);
        let (n, d, m) = (x.rows(), self.input_dim(), self.width());
        let mut jac = DenseMatrix::zeros(n, m * d);
        for i in 0..n {
            let xi = x.row(i);
            for j in 0..m {
                let scale = self.unit_coefficient(j) * self.activation.derivative(z[(i, j)]);
                for k in 0..d {
                    jac[(i, j * d + k)] = scale * xi[k];
                }
            }
        }
        Ok(jac)
    }

    /// The n×n leading sub-Jacobian: the first n columns of [`jacobian_w`] in
    /// the shared vec(w) layout, i.e. full blocks w_1..w_k1 plus the first k2
    /// coordinates of w_{k1+1} where n = k1·d + k2. Requires n ≤ m·d/2 so the
    /// selection stays within first-half units.
    pub fn square_sub_jacobian(&self, x: &DenseMatrix) -> Result<DenseMatrix, ModelError> {
        self.check_input(x)?;
        let (n, d, m) = (x.rows(), self.input_dim(), self.width());
        if 2 * n > m * d {
            return Err(ModelError::SubJacobianTooManySamples { n, half: m * d / 2 });
        }
        let z = self.preactivations(x);
        let mut sub = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let xi = x.row(i);
            for col in 0..n {
                let j = col / d;
                let k = col % d;
                let scale = self.unit_coefficient(j) * self.activation.derivative(z[(i, j)]);
                sub[(i, col)] = scale * xi[k];
            }
        }
        Ok(sub)
    }
}
