//! Low-rank AMP for Gaussian-mixture clustering and its streaming version.
//!
//! Data are columns `y_j = U v_j / sqrt(N) + sqrt(delta) xi_j` stored as an
//! `N x M` matrix, `v_j` one-hot. The Gaussian likelihood gives the effective
//! channel `J = Y / (sqrt(N) delta)` and `beta = 1 / (N delta)`, so `A_U`,
//! `A_V` are `beta` times Gram matrices of the current estimates and the
//! centroid rows `U_i` keep unit-order entries.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::denoisers::{linear_response_covariance, truncated_mean_field_denoise, PriorSpec};
use crate::error::{domain, Error, Result};
use crate::state_evolution::spd_inverse;

/// Posterior over the `R` basis vectors: `p_k ∝ exp(-A_kk/2 + B_k)`.
/// Returns the mean `p` and covariance `diag(p) - p p^T`.
pub fn onehot_denoise_v(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let r = b.len();
    if a.dim() != (r, r) {
        return Err(Error::Shape(format!("A is {:?}, B has {r} entries", a.dim())));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(domain("one-hot denoiser inputs must be finite"));
    }
    let p = softmax_field(a, b);
    let cov = onehot_cov(&p);
    Ok((p, cov))
}

fn softmax_field(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let r = b.len();
    let f = Array1::from_shape_fn(r, |k| b[k] - 0.5 * a[[k, k]]);
    let mx = f.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut p = f.mapv(|v| (v - mx).exp());
    let z = p.sum();
    p /= z;
    p
}

fn onehot_cov(p: &Array1<f64>) -> Array2<f64> {
    let r = p.len();
    Array2::from_shape_fn((r, r), |(k, l)| if k == l { p[k] - p[k] * p[k] } else { -p[k] * p[l] })
}

/// Streaming state for the centroids: `Lambda_U = sum A_U`, `Theta_U = sum B_U`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAccumulator {
    pub lambda: Array2<f64>,
    pub theta: Array2<f64>,
    pub batches_processed: usize,
}

impl ClusterAccumulator {
    pub fn new(n: usize, rank: usize) -> Self {
        Self { lambda: Array2::zeros((rank, rank)), theta: Array2::zeros((n, rank)), batches_processed: 0 }
    }

    pub fn rank(&self) -> usize {
        self.lambda.nrows()
    }
}

/// One batch of data for the low-rank model.
#[derive(Debug, Clone)]
pub struct LowRankProblem<'a> {
    /// `N x M_b`, one data point per column.
    pub y: ArrayView2<'a, f64>,
    pub rank: usize,
    /// Entry-wise prior on the centroid rows: Gaussian or non-negative truncated Gaussian.
    pub prior_u: PriorSpec,
    pub delta: f64,
}

impl LowRankProblem<'_> {
    fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(domain("rank must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(domain(format!("delta must be positive, got {}", self.delta)));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(domain("data must be finite"));
        }
        match self.prior_u {
            PriorSpec::Gaussian { .. } | PriorSpec::TruncatedNonnegGaussian { .. } => Ok(()),
            _ => Err(Error::Unsupported("centroid prior must be gaussian or truncated_nonneg_gaussian".into())),
        }
    }

    /// `beta = 1 / (N delta)`.
    pub fn beta(&self) -> f64 {
        1.0 / (self.y.nrows() as f64 * self.delta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankState {
    pub u_hat: Array2<f64>,
    pub sigma_u: Array2<f64>,
    pub v_hat: Array2<f64>,
    pub sigma_v: Array2<f64>,
    pub b_u: Array2<f64>,
    pub b_v: Array2<f64>,
    pub a_u: Array2<f64>,
    pub a_v: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowRankOptions {
    pub t_max: usize,
    pub tol: f64,
}

impl Default for LowRankOptions {
    fn default() -> Self {
        Self { t_max: 50, tol: 1e-7 }
    }
}

/// `eta_U` on every row: returns the means and the summed covariance.
fn denoise_u(prior: &PriorSpec, a: &Array2<f64>, b: &Array2<f64>, warm: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, r) = b.dim();
    match *prior {
        PriorSpec::Gaussian { mean, variance } => {
            let p = Array2::eye(r) / variance + a;
            let c = spd_inverse(&p)?;
            let shifted = b + mean / variance;
            Ok((shifted.dot(&c), c * n as f64))
        }
        PriorSpec::TruncatedNonnegGaussian { variance } => {
            let mut means = Array2::zeros((n, r));
            let mut vars = Array2::zeros((n, r));
            for i in 0..n {
                let out = truncated_mean_field_denoise(variance, a, b.row(i), warm.row(i))?;
                means.row_mut(i).assign(&out.mean);
                vars.row_mut(i).assign(&out.variances);
            }
            let cov = linear_response_covariance(a, &vars)?;
            Ok((means, cov))
        }
        _ => Err(Error::Unsupported("centroid prior".into())),
    }
}

fn denoise_v(a: &Array2<f64>, b: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (m, r) = b.dim();
    let mut v = Array2::zeros((m, r));
    let mut sigma = Array2::zeros((r, r));
    for j in 0..m {
        let p = softmax_field(a.view(), b.row(j));
        sigma += &onehot_cov(&p);
        v.row_mut(j).assign(&p);
    }
    (v, sigma)
}

fn mean_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Runs low-rank AMP on one batch with the centroid denoiser shifted by the
/// accumulator. `u_prev` is the centroid estimate entering the batch and `v0`
/// the initial label posteriors (`M_b x R`).
pub fn lowrank_amp_batch(
    problem: &LowRankProblem,
    acc: &ClusterAccumulator,
    u_prev: &Array2<f64>,
    v0: &Array2<f64>,
    opts: &LowRankOptions,
) -> Result<(LowRankState, ClusterAccumulator)> {
    problem.validate()?;
    let (n, m) = problem.y.dim();
    let r = problem.rank;
    if acc.theta.dim() != (n, r) || acc.lambda.dim() != (r, r) {
        return Err(Error::Shape(format!(
            "accumulator is for {:?}, data need ({n}, {r})",
            acc.theta.dim()
        )));
    }
    if u_prev.dim() != (n, r) || v0.dim() != (m, r) {
        return Err(Error::Shape("initial estimates have the wrong shape".into()));
    }
    let beta = problem.beta();
    let j = problem.y.mapv(|v| v / ((n as f64).sqrt() * problem.delta));
    let mut u_hat = u_prev.clone();
    let mut v_hat = v0.clone();
    let mut sigma_v = Array2::<f64>::zeros((r, r));
    for row in v_hat.rows() {
        sigma_v += &onehot_cov(&row.to_owned());
    }
    let mut a_u = Array2::zeros((r, r));
    let mut b_u = Array2::zeros((n, r));
    let mut a_v = Array2::zeros((r, r));
    let mut b_v = Array2::zeros((m, r));
    let mut sigma_u = Array2::zeros((r, r));
    let mut converged = false;
    let mut iterations = 0;
    for t in 0..opts.t_max {
        iterations = t + 1;
        b_u = j.dot(&v_hat) - u_hat.dot(&sigma_v) * beta;
        a_u = v_hat.t().dot(&v_hat) * beta;
        let (u_new, s_u) = denoise_u(&problem.prior_u, &(&acc.lambda + &a_u), &(&acc.theta + &b_u), &u_hat)?;
        sigma_u = s_u;
        b_v = j.t().dot(&u_new) - v_hat.dot(&sigma_u) * beta;
        a_v = u_new.t().dot(&u_new) * beta;
        let (v_new, s_v) = denoise_v(&a_v, &b_v);
        if u_new.iter().chain(v_new.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                batch: acc.batches_processed,
                iteration: t,
                last_estimate: u_hat.iter().copied().collect(),
                partial: None,
            });
        }
        let change = mean_abs_diff(&u_new, &u_hat) + mean_abs_diff(&v_new, &v_hat);
        u_hat = u_new;
        v_hat = v_new;
        sigma_v = s_v;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let next = ClusterAccumulator {
        lambda: &acc.lambda + &a_u,
        theta: &acc.theta + &b_u,
        batches_processed: acc.batches_processed + 1,
    };
    Ok((LowRankState { u_hat, sigma_u, v_hat, sigma_v, b_u, b_v, a_u, a_v, iterations, converged }, next))
}

/// Centroid estimate implied by the accumulator alone.
pub fn accumulated_centroids(prior: &PriorSpec, acc: &ClusterAccumulator) -> Result<Array2<f64>> {
    let warm = Array2::zeros(acc.theta.raw_dim());
    Ok(denoise_u(prior, &acc.lambda, &acc.theta, &warm)?.0)
}

/// Index of the largest entry in each row, ties to the lowest index.
pub fn argmax_rows(v: &Array2<f64>) -> Vec<usize> {
    v.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Nearest centroid (in data units `c_k = U_k / sqrt(N)`) for every column.
fn nearest(y: ArrayView2<f64>, centers: &Array2<f64>) -> Vec<usize> {
    let r = centers.ncols();
    let norms: Vec<f64> = (0..r).map(|k| centers.column(k).dot(&centers.column(k))).collect();
    let cross = y.t().dot(centers);
    cross
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for k in 0..r {
                let d = norms[k] - 2.0 * row[k];
                if d < bd {
                    bd = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// k-means++ seeding on the columns of `y`; returns centers in data units.
pub fn kmeans_pp<R: Rng + ?Sized>(y: ArrayView2<f64>, rank: usize, rng: &mut R) -> Array2<f64> {
    let (n, m) = y.dim();
    let mut centers = Array2::zeros((n, rank));
    if m == 0 {
        return centers;
    }
    let first = rng.random_range(0..m);
    centers.column_mut(0).assign(&y.column(first));
    let mut d2: Vec<f64> = (0..m).map(|j| sq_dist(y.column(j), centers.column(0))).collect();
    for k in 1..rank {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = m - 1;
            for (j, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = j;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..m)
        };
        centers.column_mut(k).assign(&y.column(pick));
        for (j, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(y.column(j), centers.column(k)));
        }
    }
    centers
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn one_hot(labels: &[usize], rank: usize) -> Array2<f64> {
    let mut v = Array2::zeros((labels.len(), rank));
    for (j, &l) in labels.iter().enumerate() {
        v[[j, l]] = 1.0;
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOptions {
    pub rank: usize,
    pub prior_u: PriorSpec,
    /// Noise variance; the starting value when `learn_noise` is set.
    pub delta: f64,
    pub learn_noise: bool,
    /// Batches whose starting centroids come from k-means++ seeding.
    pub init_batches: usize,
    pub amp: LowRankOptions,
}

impl ClusterOptions {
    pub fn new(rank: usize, prior_u: PriorSpec, delta: f64) -> Self {
        Self { rank, prior_u, delta, learn_noise: false, init_batches: 5, amp: LowRankOptions::default() }
    }
}

/// Ground truth for scoring a clustering run.
#[derive(Debug, Clone, Copy)]
pub struct ClusterTruth<'a> {
    /// `N x R`.
    pub u: &'a Array2<f64>,
    /// Labels per batch.
    pub labels: &'a [Vec<usize>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterBatchReport {
    pub iterations: usize,
    pub converged: bool,
    pub delta: f64,
    pub centroid_mse: Option<f64>,
    pub label_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutput {
    /// `N x R` centroid estimates (unit-order entries).
    pub u_hat: Array2<f64>,
    pub labels: Vec<Vec<usize>>,
    pub accumulator: ClusterAccumulator,
    pub batches: Vec<ClusterBatchReport>,
    pub warnings: Vec<String>,
}

/// Full streaming pipeline: seeding, per-batch AMP, hard labels and optional
/// noise learning after each batch.
pub fn gmm_stream_cluster<R: Rng + ?Sized>(
    batches: &[ArrayView2<f64>],
    opts: &ClusterOptions,
    truth: Option<ClusterTruth>,
    rng: &mut R,
) -> Result<ClusterOutput> {
    let n = batches.first().map(|b| b.nrows()).ok_or_else(|| domain("no batches"))?;
    let r = opts.rank;
    if batches.iter().any(|b| b.nrows() != n) {
        return Err(Error::Shape("batches must share the number of rows".into()));
    }
    if let Some(t) = truth {
        if t.u.dim() != (n, r) || t.labels.len() != batches.len() {
            return Err(Error::Shape("truth does not match the stream".into()));
        }
    }
    let sqrt_n = (n as f64).sqrt();
    let mut acc = ClusterAccumulator::new(n, r);
    let mut u_hat = Array2::zeros((n, r));
    let mut delta = opts.delta;
    let mut labels_out = Vec::with_capacity(batches.len());
    let mut reports = Vec::with_capacity(batches.len());
    let mut warnings = Vec::new();
    for (k, y) in batches.iter().enumerate() {
        if y.ncols() == 0 {
            warnings.push(format!("batch {k} is empty and was skipped"));
            labels_out.push(Vec::new());
            reports.push(ClusterBatchReport {
                iterations: 0,
                converged: true,
                delta,
                centroid_mse: None,
                label_loss: None,
            });
            continue;
        }
        let start_u = if k < opts.init_batches { kmeans_pp(*y, r, rng) * sqrt_n } else { u_hat.clone() };
        let init_labels = nearest(*y, &(&start_u / sqrt_n));
        let v0 = one_hot(&init_labels, r);
        let problem = LowRankProblem { y: *y, rank: r, prior_u: opts.prior_u, delta };
        let (state, next) = lowrank_amp_batch(&problem, &acc, &start_u, &v0, &opts.amp)?;
        acc = next;
        u_hat = state.u_hat;
        let labels = argmax_rows(&state.v_hat);
        if opts.learn_noise {
            let resid = y.to_owned() - u_hat.dot(&state.v_hat.t()) / sqrt_n;
            delta = (resid.mapv(|v| v * v).sum() / resid.len() as f64).max(1e-12);
        }
        let (centroid_mse, label_loss) = match truth {
            Some(t) => {
                let (c, l) = permutation_matched_losses(&u_hat, &labels, t.u, &t.labels[k])?;
                (Some(c), Some(l))
            }
            None => (None, None),
        };
        reports.push(ClusterBatchReport {
            iterations: state.iterations,
            converged: state.converged,
            delta: problem.delta,
            centroid_mse,
            label_loss,
        });
        labels_out.push(labels);
    }
    Ok(ClusterOutput { u_hat, labels: labels_out, accumulator: acc, batches: reports, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutput {
    /// Centers in data units, `N x R`.
    pub centers: Array2<f64>,
    pub labels: Vec<Vec<usize>>,
    pub counts: Vec<u64>,
}

impl KMeansOutput {
    /// Centers rescaled to the units of `U` (`sqrt(N) c_k`).
    pub fn u_hat(&self) -> Array2<f64> {
        &self.centers * (self.centers.nrows() as f64).sqrt()
    }

    /// Labels from the final centers, for a second pass over the stream.
    pub fn relabel(&self, y: ArrayView2<f64>) -> Vec<usize> {
        nearest(y, &self.centers)
    }
}

/// Web-scale mini-batch k-means: assign each point of a batch to its nearest
/// center, then move centers with per-center rate `1 / count`.
pub fn minibatch_kmeans<R: Rng + ?Sized>(batches: &[ArrayView2<f64>], rank: usize, rng: &mut R) -> Result<KMeansOutput> {
    let n = batches.first().map(|b| b.nrows()).ok_or_else(|| domain("no batches"))?;
    if rank == 0 {
        return Err(domain("rank must be at least 1"));
    }
    let init = Normal::new(0.0, 1e-3f64.sqrt()).expect("valid normal");
    let mut centers = Array2::from_shape_simple_fn((n, rank), || init.sample(rng));
    let mut counts = vec![0u64; rank];
    let mut labels = Vec::with_capacity(batches.len());
    for y in batches {
        if y.nrows() != n {
            return Err(Error::Shape("batches must share the number of rows".into()));
        }
        let assign = nearest(*y, &centers);
        for (j, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            let eta = 1.0 / counts[c] as f64;
            let mut col = centers.column_mut(c);
            col *= 1.0 - eta;
            col.scaled_add(eta, &y.column(j));
        }
        labels.push(assign);
    }
    Ok(KMeansOutput { centers, labels, counts })
}

fn permutations(r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..r).collect();
    fn heap(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(p.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, p, out);
            if k % 2 == 0 {
                p.swap(i, k - 1);
            } else {
                p.swap(0, k - 1);
            }
        }
    }
    heap(r, &mut p, &mut out);
    out
}

/// Centroid MSE per entry and 0-1 label loss under the column permutation of
/// the estimate that minimises their sum. Exhaustive up to `R = 8`, then an
/// optimal assignment on centroid distances.
pub fn permutation_matched_losses(
    u_hat: &Array2<f64>,
    labels_hat: &[usize],
    u0: &Array2<f64>,
    labels0: &[usize],
) -> Result<(f64, f64)> {
    if u_hat.dim() != u0.dim() || labels_hat.len() != labels0.len() {
        return Err(Error::Shape("estimate and truth differ in shape".into()));
    }
    let (n, r) = u0.dim();
    if labels_hat.iter().chain(labels0).any(|&l| l >= r) {
        return Err(domain("label out of range"));
    }
    // cost[k][l]: squared distance between estimated column k and true column l.
    let mut cost = vec![vec![0.0; r]; r];
    for k in 0..r {
        for l in 0..r {
            cost[k][l] = sq_dist(u_hat.column(k), u0.column(l));
        }
    }
    let mut confusion = vec![vec![0usize; r]; r];
    for (&a, &b) in labels_hat.iter().zip(labels0) {
        confusion[a][b] += 1;
    }
    let m = labels0.len();
    let score = |perm: &[usize]| {
        // perm[k] = true cluster matched with estimated cluster k.
        let se: f64 = (0..r).map(|k| cost[k][perm[k]]).sum();
        let hits: usize = (0..r).map(|k| confusion[k][perm[k]]).sum();
        let mse = se / (n * r).max(1) as f64;
        let loss = if m == 0 { 0.0 } else { 1.0 - hits as f64 / m as f64 };
        (mse, loss)
    };
    let best = if r <= 8 {
        permutations(r)
            .into_iter()
            .map(|p| score(&p))
            .min_by(|a, b| (a.0 + a.1).total_cmp(&(b.0 + b.1)))
            .unwrap()
    } else {
        let scale = 1e9 / cost.iter().flatten().fold(1e-300f64, |a, &b| a.max(b));
        let w: Vec<Vec<i64>> = cost.iter().map(|row| row.iter().map(|&c| -(c * scale).round() as i64).collect()).collect();
        let matrix = pathfinding::matrix::Matrix::from_rows(w).expect("square");
        let (_, assign) = pathfinding::kuhn_munkres::kuhn_munkres(&matrix);
        score(&assign)
    };
    Ok(best)
}

/// Splits the columns of `y` into consecutive batches of `cols` points.
pub fn column_batches(y: &Array2<f64>, cols: usize) -> Vec<ArrayView2<'_, f64>> {
    let m = y.ncols();
    let cols = cols.max(1);
    (0..m).step_by(cols).map(|s| y.slice(s![.., s..(s + cols).min(m)])).collect()
}

/// Column means, the single-cluster answer.
pub fn data_mean(y: ArrayView2<f64>) -> Array1<f64> {
    y.mean_axis(Axis(1)).unwrap_or_else(|| Array1::zeros(y.nrows()))
}
