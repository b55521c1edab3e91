//! Training data: n input rows with scalar targets, plus the synthetic
//! regression generator used by the experiment grid.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::init::{GaussianStream, Seed};
use crate::linalg::{DenseMatrix, DenseVector};

/// How a dataset came to be; echoed into result files for reproducibility.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: Seed,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: DenseVector,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Writes the snapshot format: d feature columns then one target column,
    /// in generation row order.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.n() {
            for k in 0..self.d() {
                write!(f, "{},", self.x[(i, k)])?;
            }
            writeln!(f, "{}", self.y[i])?;
        }
        f.flush()
    }
}

/// Synthetic regression data: rows drawn i.i.d. standard Gaussian and
/// normalized to unit Euclidean norm, targets y_i = (1ᵀx_i)².
pub fn make_synthetic(n: usize, d: usize, seed: Seed) -> Dataset {
    let mut g = GaussianStream::new(seed);
    let mut x = DenseMatrix::zeros(n, d);
    let mut y = DenseVector::zeros(n);
    for i in 0..n {
        let mut norm_sq = 0.0;
        for k in 0..d {
            let val = g.next_normal();
            x[(i, k)] = val;
            norm_sq += val * val;
        }
        let inv = 1.0 / norm_sq.sqrt();
        let mut coord_sum = 0.0;
        for k in 0..d {
            x[(i, k)] *= inv;
            coord_sum += x[(i, k)];
        }
        y[i] = coord_sum * coord_sum;
    }
    Dataset {
        x,
        y,
        provenance: Provenance {
            generator: format!("synthetic(n={n}, d={d})"),
            seed,
        },
    }
}
