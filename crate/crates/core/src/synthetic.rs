//! Synthetic teacher-student instances.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::denoisers::{ChannelSpec, PriorSpec};

/// Distribution of the design entries, both with variance `1/N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Design {
    #[default]
    Gaussian,
    /// `+-1/sqrt(N)` with equal probability.
    Rademacher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmInstance {
    pub x: Array1<f64>,
    pub phi: Array2<f64>,
    pub y: Array1<f64>,
}

/// Draws `x ~ prior`, an `m x n` Gaussian design and `y` through the channel.
pub fn glm_instance<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    prior: &PriorSpec,
    channel: &ChannelSpec,
    rng: &mut R,
) -> GlmInstance {
    glm_instance_with(n, m, prior, channel, Design::Gaussian, rng)
}

pub fn glm_instance_with<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    prior: &PriorSpec,
    channel: &ChannelSpec,
    design: Design,
    rng: &mut R,
) -> GlmInstance {
    let x = Array1::from_shape_fn(n, |_| prior.sample(rng));
    let phi = design_matrix(m, n, design, rng);
    let z = phi.dot(&x);
    let y = z.mapv(|zi| channel.sample(zi, rng));
    GlmInstance { x, phi, y }
}

pub fn design_matrix<R: Rng + ?Sized>(m: usize, n: usize, design: Design, rng: &mut R) -> Array2<f64> {
    let sd = 1.0 / (n as f64).sqrt();
    match design {
        Design::Gaussian => Array2::from_shape_simple_fn((m, n), || {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        }),
        Design::Rademacher => {
            Array2::from_shape_simple_fn((m, n), || if rng.random::<bool>() { sd } else { -sd })
        }
    }
}

/// Gaussian mixture data `Y = U V^T / sqrt(N) + sqrt(delta) xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmInstance {
    /// `N x R`; column `k` is the (unscaled) centroid of cluster `k`.
    pub u: Array2<f64>,
    pub labels: Vec<usize>,
    /// `N x M`, one data point per column.
    pub y: Array2<f64>,
}

impl GmmInstance {
    pub fn rank(&self) -> usize {
        self.u.ncols()
    }
}

pub fn gmm_instance<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rank: usize,
    prior_u: &PriorSpec,
    delta: f64,
    rng: &mut R,
) -> GmmInstance {
    let u = Array2::from_shape_simple_fn((n, rank), || prior_u.sample(rng));
    let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..rank)).collect();
    let scale = 1.0 / (n as f64).sqrt();
    let noise = delta.sqrt();
    let mut y = Array2::zeros((n, m));
    for (j, &l) in labels.iter().enumerate() {
        for i in 0..n {
            let xi: f64 = StandardNormal.sample(rng);
            y[[i, j]] = scale * u[[i, l]] + noise * xi;
        }
    }
    GmmInstance { u, labels, y }
}
