//! Weight initialization: regular LeCun and the mirrored variant that
//! duplicates the first half of the hidden units into the second half so the
//! network output is identically zero before training.
//!
//! Sampling is deterministic per [`Seed`]: a ChaCha8 stream feeds a
//! Box-Muller transform (two 53-bit uniforms per normal pair, spare value
//! cached). Hidden weights are drawn unit by unit (column j fully before
//! column j+1), then the outer weights. Determinism is contractual within
//! this implementation only.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{DenseMatrix, DenseVector};
use crate::model::{Activation, HeadKind, ModelError, Params};

/// Root of all randomness for a run. Equal seeds plus equal configuration
/// give bitwise-identical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Derives an independent child seed for stream `i` with one SplitMix64
    /// finalizer round over `value + (i+1)·φ64`. Used to fan one top-level
    /// seed out to grid cells and dataset generators.
    pub fn split(self, i: u64) -> Seed {
        let mut z = self
            .0
            .wrapping_add((i.wrapping_add(1)).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        Seed(z ^ (z >> 31))
    }
}

/// Deterministic standard-normal stream (ChaCha8 + Box-Muller).
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: Seed) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed.0),
            spare: None,
        }
    }

    /// Uniform in the open interval (0, 1): top 53 bits of a u64, offset by
    /// half an ulp so 0 is never produced.
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Regular LeCun initialization: w entries ~ N(0, 1/d), v entries ~ N(0, 1/m),
/// all independent, no mirroring.
pub fn lecun_init(
    d: usize,
    m: usize,
    head: HeadKind,
    activation: Activation,
    seed: Seed,
) -> Result<Params, ModelError> {
    if head == HeadKind::Paired && m % 2 != 0 {
        return Err(ModelError::OddPairedWidth { m });
    }
    let mut g = GaussianStream::new(seed);
    let w_sd = (1.0 / d as f64).sqrt();
    let v_sd = (1.0 / m as f64).sqrt();

    let mut w = DenseMatrix::zeros(d, m);
    for j in 0..m {
        for k in 0..d {
            w[(k, j)] = w_sd * g.next_normal();
        }
    }
    let v_len = match head {
        HeadKind::Plain => m,
        HeadKind::Paired => m / 2,
    };
    let v = DenseVector::new((0..v_len).map(|_| v_sd * g.next_normal()).collect());
    Params::new(w, v, head, activation)
}

/// Mirrored LeCun initialization: the first m/2 hidden units are drawn as in
/// [`lecun_init`] and copied verbatim into the second half. For the plain
/// head the second half of v is the negation of the first half; for the
/// paired head v holds the m/2 free weights and the negation is structural.
/// Either way the initial output is identically zero.
pub fn mirrored_lecun_init(
    d: usize,
    m: usize,
    head: HeadKind,
    activation: Activation,
    seed: Seed,
) -> Result<Params, ModelError> {
    if m % 2 != 0 {
        return Err(ModelError::OddPairedWidth { m });
    }
    let half = m / 2;
    let mut g = GaussianStream::new(seed);
    let w_sd = (1.0 / d as f64).sqrt();
    let v_sd = (1.0 / m as f64).sqrt();

    let mut w = DenseMatrix::zeros(d, m);
    for j in 0..half {
        for k in 0..d {
            let val = w_sd * g.next_normal();
            w[(k, j)] = val;
            w[(k, j + half)] = val;
        }
    }

    let v_first: Vec<f64> = (0..half).map(|_| v_sd * g.next_normal()).collect();
    let v = match head {
        HeadKind::Plain => {
            let mut full = v_first.clone();
            full.extend(v_first.iter().map(|x| -x));
            DenseVector::new(full)
        }
        HeadKind::Paired => DenseVector::new(v_first),
    };
    Params::new(w, v, head, activation)
}
