//! Finite-difference validation of the analytic gradients, runnable as a
//! suite across heads and activations. This is the executable form of the
//! derivative correctness contract; the CLI wires it to an exit code.

use crate::dataset::{Dataset, Provenance};
use crate::init::{GaussianStream, Seed};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::model::{Activation, HeadKind, Params};
use crate::objective::{grad, loss};

/// Passing bar for the suite: max relative error of analytic vs central
/// finite differences.
pub const GRADCHECK_TOL: f64 = 1e-5;

/// Location of the worst disagreement seen by a sweep.
#[derive(Debug, Clone)]
pub struct WorstOffender {
    pub head: HeadKind,
    pub activation: Activation,
    pub instance: usize,
    /// "w[k,j]" or "v[j]".
    pub coordinate: String,
    pub analytic: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub instances_checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<WorstOffender>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= GRADCHECK_TOL
    }
}

/// Runs the sweep: for every selected head × activation, 10 seeded random
/// instances, comparing every gradient coordinate against central finite
/// differences with per-parameter step 1e-6·(1+|θ_k|).
///
/// `corruption` is a negative-control hook: it is added to one analytic
/// gradient entry before comparison, so a corrupted run must fail.
pub fn run_gradcheck(
    heads: &[HeadKind],
    activations: &[Activation],
    instances: usize,
    seed: Seed,
    corruption: Option<f64>,
) -> GradcheckReport {
    let mut report = GradcheckReport {
        instances_checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let mut stream_id = 0u64;
    for &head in heads {
        for &activation in activations {
            for instance in 0..instances {
                let s = seed.split(stream_id);
                stream_id += 1;
                check_instance(head, activation, instance, s, corruption, &mut report);
                report.instances_checked += 1;
            }
        }
    }
    report
}

fn check_instance(
    head: HeadKind,
    activation: Activation,
    instance: usize,
    seed: Seed,
    corruption: Option<f64>,
    report: &mut GradcheckReport,
) {
    let (n, d, m) = (6, 4, 6);
    let mut g = GaussianStream::new(seed);
    let w = DenseMatrix::from_vec(d, m, (0..d * m).map(|_| g.next_normal()).collect());
    let v_len = if head == HeadKind::Paired { m / 2 } else { m };
    let v = DenseVector::new((0..v_len).map(|_| g.next_normal()).collect());
    let params = Params::new(w, v, head, activation).expect("valid test instance");
    let data = Dataset {
        x: DenseMatrix::from_vec(n, d, (0..n * d).map(|_| g.next_normal()).collect()),
        y: DenseVector::new((0..n).map(|_| g.next_normal()).collect()),
        provenance: Provenance {
            generator: "gradcheck".into(),
            seed,
        },
    };

    let mut analytic = grad(&params, &data).expect("dimensions consistent");
    if let Some(c) = corruption {
        analytic.grad_w[(0, 0)] += c;
    }

    let mut record = |coordinate: String, an: f64, fd: f64| {
        let rel = (an - fd).abs() / (1.0 + an.abs());
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some(WorstOffender {
                head,
                activation,
                instance,
                coordinate,
                analytic: an,
                finite_difference: fd,
                rel_error: rel,
            });
        }
    };

    for j in 0..m {
        for k in 0..d {
            let h = 1e-6 * (1.0 + params.w()[(k, j)].abs());
            let mut plus = params.clone();
            plus.w_mut()[(k, j)] += h;
            let mut minus = params.clone();
            minus.w_mut()[(k, j)] -= h;
            let fd = (loss(&plus, &data).unwrap() - loss(&minus, &data).unwrap()) / (2.0 * h);
            record(format!("w[{k},{j}]"), analytic.grad_w[(k, j)], fd);
        }
    }
    for j in 0..v_len {
        let h = 1e-6 * (1.0 + params.v()[j].abs());
        let mut plus = params.clone();
        plus.v_mut()[j] += h;
        let mut minus = params.clone();
        minus.v_mut()[j] -= h;
        let fd = (loss(&plus, &data).unwrap() - loss(&minus, &data).unwrap()) / (2.0 * h);
        record(format!("v[{j}]"), analytic.grad_v[j], fd);
    }
}
