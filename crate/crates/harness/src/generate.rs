//! Ground-truth instances drawn batch by batch from named streams.

use miniamp_core::denoisers::{ChannelSpec, PriorSpec};
use miniamp_core::glm_amp::GlmBatch;
use miniamp_core::synthetic::{design_matrix, Design};
use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::stream_rng;

/// Teacher vector with a design and responses, generated one batch of rows
/// at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmInstance {
    pub x: Array1<f64>,
    /// `M x N`, batches stacked by rows.
    pub phi: Array2<f64>,
    pub y: Array1<f64>,
    pub rows_per_batch: usize,
    pub seed: u64,
}

impl GlmInstance {
    pub fn batches(&self) -> Vec<GlmBatch<'_>> {
        let m = self.y.len();
        (0..m)
            .step_by(self.rows_per_batch.max(1))
            .map(|s| {
                let e = (s + self.rows_per_batch).min(m);
                GlmBatch { phi: self.phi.slice(s![s..e, ..]), y: self.y.slice(s![s..e]) }
            })
            .collect()
    }

    pub fn num_batches(&self) -> usize {
        self.y.len().div_ceil(self.rows_per_batch.max(1))
    }
}

/// Draws `x ~ prior` and `num_batches` batches of `rows` Gaussian
/// measurements with entries of variance `1/N`.
#[allow(clippy::too_many_arguments)]
pub fn generate_glm(
    experiment: &str,
    seed: u64,
    n: usize,
    rows: usize,
    num_batches: usize,
    prior: &PriorSpec,
    channel: &ChannelSpec,
    design: Design,
) -> GlmInstance {
    let mut rng = stream_rng(experiment, seed, "truth", 0);
    let x = Array1::from_shape_fn(n, |_| prior.sample(&mut rng));
    let m = rows * num_batches;
    let mut phi = Array2::zeros((m, n));
    let mut y = Array1::zeros(m);
    for k in 0..num_batches {
        let mut rng = stream_rng(experiment, seed, "batch", k as u64);
        let block = design_matrix(rows, n, design, &mut rng);
        let z = block.dot(&x);
        let yk = z.mapv(|zi| channel.sample(zi, &mut rng));
        phi.slice_mut(s![k * rows..(k + 1) * rows, ..]).assign(&block);
        y.slice_mut(s![k * rows..(k + 1) * rows]).assign(&yk);
    }
    GlmInstance { x, phi, y, rows_per_batch: rows, seed }
}

/// Gaussian mixture `Y = U V^T / sqrt(N) + sqrt(delta) xi`, columns in batches.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmInstance {
    /// `N x R` centroids with unit-order entries.
    pub u: Array2<f64>,
    pub labels: Vec<Vec<usize>>,
    /// `N x M_b` per batch.
    pub batches: Vec<Array2<f64>>,
    pub seed: u64,
}

impl GmmInstance {
    pub fn views(&self) -> Vec<ArrayView2<'_, f64>> {
        self.batches.iter().map(|b| b.view()).collect()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn generate_gmm(
    experiment: &str,
    seed: u64,
    n: usize,
    cols: usize,
    num_batches: usize,
    rank: usize,
    prior_u: &PriorSpec,
    delta: f64,
) -> GmmInstance {
    let mut rng = stream_rng(experiment, seed, "truth", 0);
    let u = Array2::from_shape_simple_fn((n, rank), || prior_u.sample(&mut rng));
    let scale = 1.0 / (n as f64).sqrt();
    let noise = delta.sqrt();
    let mut labels = Vec::with_capacity(num_batches);
    let mut batches = Vec::with_capacity(num_batches);
    for k in 0..num_batches {
        let mut rng = stream_rng(experiment, seed, "batch", k as u64);
        let lab: Vec<usize> = (0..cols).map(|_| rng.random_range(0..rank)).collect();
        let mut y = Array2::zeros((n, cols));
        for (j, &l) in lab.iter().enumerate() {
            for i in 0..n {
                let xi: f64 = StandardNormal.sample(&mut rng);
                y[[i, j]] = scale * u[[i, l]] + noise * xi;
            }
        }
        labels.push(lab);
        batches.push(y);
    }
    GmmInstance { u, labels, batches, seed }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slr(seed: u64, n: usize, rows: usize, b: usize) -> GlmInstance {
        let prior = PriorSpec::gauss_bernoulli(0.3).unwrap();
        let ch = ChannelSpec::gaussian(1e-8).unwrap();
        generate_glm("t", seed, n, rows, b, &prior, &ch, Design::Gaussian)
    }

    #[test]
    fn design_column_variance() {
        let n = 2000;
        let g = slr(3, n, 1000, 2);
        for c in g.phi.columns() {
            let v = c.dot(&c) / c.len() as f64 * n as f64;
            // 2000 entries per column: relative sd 0.032, five sigma.
            assert!((0.84..=1.16).contains(&v), "{v}");
        }
        let all = g.phi.iter().map(|v| v * v).sum::<f64>() / g.phi.len() as f64 * n as f64;
        assert!((0.9..=1.1).contains(&all), "{all}");
    }

    #[test]
    fn sparsity_within_three_sigma() {
        let g = slr(4, 2000, 1, 1);
        let nz = g.x.iter().filter(|v| **v != 0.0).count() as f64;
        assert!((nz - 600.0).abs() < 3.0 * (2000.0 * 0.3 * 0.7f64).sqrt());
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let a = slr(5, 50, 10, 3);
        let b = slr(5, 50, 10, 3);
        assert_eq!(a, b);
        assert_ne!(a.x, slr(6, 50, 10, 3).x);
    }

    #[test]
    fn batches_do_not_depend_on_their_count() {
        let a = slr(7, 40, 10, 2);
        let b = slr(7, 40, 10, 4);
        assert_eq!(a.phi, b.phi.slice(s![..20, ..]));
        assert_eq!(b.batches().len(), 4);
    }

    #[test]
    fn noiseless_gmm_columns_are_centroids() {
        let p = PriorSpec::gaussian(0.0, 1.0).unwrap();
        let g = generate_gmm("g", 1, 30, 20, 2, 3, &p, 0.0);
        for (y, lab) in g.batches.iter().zip(&g.labels) {
            for (j, &l) in lab.iter().enumerate() {
                for i in 0..30 {
                    assert_eq!(y[[i, j]], (1.0 / 30f64.sqrt()) * g.u[[i, l]]);
                }
            }
        }
    }

    #[test]
    fn gmm_labels_uniform() {
        let p = PriorSpec::gaussian(0.0, 1.0).unwrap();
        let g = generate_gmm("g", 2, 1, 6000, 1, 3, &p, 1.0);
        let sd = (6000.0 / 3.0 * (2.0 / 3.0f64)).sqrt();
        for k in 0..3 {
            let c = g.labels[0].iter().filter(|&&l| l == k).count() as f64;
            assert!((c - 2000.0).abs() < 3.0 * sd);
        }
        assert_eq!(g, generate_gmm("g", 2, 1, 6000, 1, 3, &p, 1.0));
    }
}
