//! Message-passing engines for generalized linear models `y = f(Phi x)`.
//!
//! All engines share one streaming mechanism: after a mini-batch converges,
//! its natural parameters `(A, B)` are added to a [`StreamAccumulator`] and the
//! next batch sees the prior tilted by `exp(-Lambda x^2/2 + Theta x)`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::denoisers::{ChannelKind, ChannelSpec, PriorSpec};
use crate::error::{domain, Error, Result};

/// A design matrix with its responses and the model used for inference.
#[derive(Debug, Clone)]
pub struct GlmProblem {
    pub phi: Array2<f64>,
    pub y: Array1<f64>,
    pub prior: PriorSpec,
    pub channel: ChannelSpec,
}

impl GlmProblem {
    pub fn new(phi: Array2<f64>, y: Array1<f64>, prior: PriorSpec, channel: ChannelSpec) -> Result<Self> {
        if phi.nrows() != y.len() {
            return Err(Error::Shape(format!(
                "Phi has {} rows but y has {} entries",
                phi.nrows(),
                y.len()
            )));
        }
        if phi.ncols() == 0 {
            return Err(Error::Shape("Phi must have at least one column".into()));
        }
        prior.validate()?;
        Ok(Self { phi, y, prior, channel })
    }

    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    pub fn m(&self) -> usize {
        self.phi.nrows()
    }

    pub fn alpha(&self) -> f64 {
        self.m() as f64 / self.n() as f64
    }

    /// Consecutive row blocks of `rows_per_batch` rows; a short final block is dropped.
    pub fn batches(&self, rows_per_batch: usize) -> Vec<GlmBatch<'_>> {
        assert!(rows_per_batch > 0, "batch size must be positive");
        (0..self.m() / rows_per_batch)
            .map(|k| {
                let r = k * rows_per_batch..(k + 1) * rows_per_batch;
                GlmBatch {
                    phi: self.phi.slice(s![r.clone(), ..]),
                    y: self.y.slice(s![r]),
                }
            })
            .collect()
    }

    pub fn as_batch(&self) -> GlmBatch<'_> {
        GlmBatch { phi: self.phi.view(), y: self.y.view() }
    }
}

/// A borrowed block of rows.
#[derive(Debug, Clone, Copy)]
pub struct GlmBatch<'a> {
    pub phi: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
}

/// Accumulated precision: one scalar on the Gaussian fast path, one value per
/// coordinate on the GAMP path.
#[derive(Debug, Clone, PartialEq)]
pub enum Precision {
    Scalar(f64),
    PerCoordinate(Array1<f64>),
}

impl Precision {
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Self::Scalar(v) => *v,
            Self::PerCoordinate(v) => v[i],
        }
    }
}

/// Natural parameters `(Lambda, Theta)` summarising every processed batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamAccumulator {
    pub lambda: Precision,
    pub theta: Array1<f64>,
    pub batches_processed: usize,
}

impl StreamAccumulator {
    pub fn scalar(n: usize) -> Self {
        Self { lambda: Precision::Scalar(0.0), theta: Array1::zeros(n), batches_processed: 0 }
    }

    pub fn per_coordinate(n: usize) -> Self {
        Self {
            lambda: Precision::PerCoordinate(Array1::zeros(n)),
            theta: Array1::zeros(n),
            batches_processed: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    /// Posterior means and variances under the effective prior alone.
    pub fn marginals(&self, prior: &PriorSpec) -> (Array1<f64>, Array1<f64>) {
        let n = self.n();
        let mut mean = Array1::zeros(n);
        let mut var = Array1::zeros(n);
        for i in 0..n {
            let (m, v) = prior.moments(self.lambda.at(i), self.theta[i]);
            mean[i] = m;
            var[i] = v;
        }
        (mean, var)
    }

    fn add_scalar(&mut self, a: f64, b: &Array1<f64>) {
        match &mut self.lambda {
            Precision::Scalar(l) => *l += a,
            Precision::PerCoordinate(l) => *l += a,
        }
        self.theta += b;
        self.batches_processed += 1;
    }

    fn add_vector(&mut self, a: &Array1<f64>, b: &Array1<f64>) {
        match &mut self.lambda {
            Precision::PerCoordinate(l) => *l += a,
            Precision::Scalar(l) => {
                let mut v = Array1::from_elem(a.len(), *l);
                v += a;
                self.lambda = Precision::PerCoordinate(v);
            }
        }
        self.theta += b;
        self.batches_processed += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpOptions {
    pub t_max: usize,
    /// Stop once `(1/N) |x_t - x_{t-1}|_1` drops below this.
    pub tol: f64,
    /// Weight kept on the previous estimate; 0 disables damping.
    pub damping: f64,
    /// Keep every iterate in the report.
    pub record_iterates: bool,
}

impl Default for AmpOptions {
    fn default() -> Self {
        Self { t_max: 200, tol: 1e-13, damping: 0.0, record_iterates: false }
    }
}

impl AmpOptions {
    fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(domain("t_max must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(domain("tol must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(domain(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        Ok(())
    }
}

/// Diagnostics of one engine run. Inner vectors are indexed by batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AmpRunReport {
    /// MSE against the ground truth, starting with the initial estimate.
    pub iteration_mse: Vec<Vec<f64>>,
    /// Mean posterior variance, aligned with `iteration_mse`.
    pub iteration_variance: Vec<Vec<f64>>,
    pub batch_mse: Vec<f64>,
    pub batch_variance: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    pub batch_seconds: Vec<f64>,
    pub iterates: Vec<Vec<Array1<f64>>>,
    /// Noise level in force at the end of each batch (VB only).
    pub noise: Vec<f64>,
    pub warnings: Vec<String>,
}

impl AmpRunReport {
    pub fn final_mse(&self) -> Option<f64> {
        self.batch_mse.last().copied()
    }
}

fn mse(x: &Array1<f64>, truth: Option<ArrayView1<f64>>) -> f64 {
    match truth {
        Some(t) => Zip::from(x).and(&t).fold(0.0, |acc, a, b| acc + (a - b) * (a - b)) / x.len() as f64,
        None => f64::NAN,
    }
}

fn l1_change(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + (x - y).abs()) / a.len() as f64
}

pub(crate) struct Timer {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Timer {
    pub(crate) fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// `Phi^T z`, accumulated over the contiguous rows of `Phi`.
fn t_dot(phi: ArrayView2<f64>, z: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(phi.ncols());
    for (row, &zk) in phi.rows().into_iter().zip(z) {
        out.scaled_add(zk, &row);
    }
    out
}

/// Per-batch result shared by the engines.
struct BatchOutcome {
    x: Array1<f64>,
    a_scalar: f64,
    a_vec: Option<Array1<f64>>,
    b: Array1<f64>,
    mse: Vec<f64>,
    variance: Vec<f64>,
    iterates: Vec<Array1<f64>>,
    iterations: usize,
    converged: bool,
}

impl AmpRunReport {
    fn push(&mut self, out: &mut BatchOutcome, seconds: f64) {
        self.batch_mse.push(*out.mse.last().unwrap());
        self.batch_variance.push(*out.variance.last().unwrap());
        self.iteration_mse.push(std::mem::take(&mut out.mse));
        self.iteration_variance.push(std::mem::take(&mut out.variance));
        self.iterations.push(out.iterations);
        self.converged.push(out.converged);
        self.batch_seconds.push(seconds);
        self.iterates.push(std::mem::take(&mut out.iterates));
    }
}

fn divergence(batch: usize, iteration: usize, last: &Array1<f64>, report: &AmpRunReport) -> Error {
    Error::Divergence {
        batch,
        iteration,
        last_estimate: last.to_vec(),
        partial: Some(Box::new(report.clone())),
    }
}

fn check_columns(phi: ArrayView2<f64>, report: &mut AmpRunReport) {
    let (m, n) = phi.dim();
    if m * n < 1000 {
        return;
    }
    let scale = phi.iter().map(|v| v * v).sum::<f64>() / m as f64;
    if !(0.8..=1.25).contains(&scale) {
        report.warnings.push(format!(
            "design columns have variance {:.3}/N, expected about 1/N",
            scale
        ));
    }
}

/// One mini-batch of the scalar-variance AMP for a Gaussian likelihood, run
/// on the prior tilted by `(lambda, theta)`.
#[allow(clippy::too_many_arguments)]
fn amp_gaussian_batch(
    batch: GlmBatch,
    prior: &PriorSpec,
    delta: f64,
    lambda: f64,
    theta: &Array1<f64>,
    opts: &AmpOptions,
    truth: Option<ArrayView1<f64>>,
    index: usize,
    report: &AmpRunReport,
) -> Result<BatchOutcome> {
    let (m, n) = batch.phi.dim();
    let alpha = m as f64 / n as f64;
    let denoise = |a: f64, b: &Array1<f64>, x: &mut Array1<f64>| -> f64 {
        let mut vsum = 0.0;
        Zip::from(x).and(b).and(theta).for_each(|xi, &bi, &ti| {
            let (mean, var) = prior.moments(lambda + a, ti + bi);
            *xi = mean;
            vsum += var;
        });
        vsum / n as f64
    };
    let mut x = Array1::zeros(n);
    let zero = Array1::zeros(n);
    let mut v = denoise(0.0, &zero, &mut x);
    let mut out = BatchOutcome {
        mse: vec![mse(&x, truth)],
        variance: vec![v],
        iterates: if opts.record_iterates { vec![x.clone()] } else { Vec::new() },
        a_scalar: 0.0,
        a_vec: None,
        b: Array1::zeros(n),
        x: x.clone(),
        iterations: 0,
        converged: false,
    };
    if m == 0 {
        out.converged = true;
        return Ok(out);
    }
    let mut z = Array1::<f64>::zeros(m);
    let mut a_prev = 0.0;
    let mut x_new = Array1::zeros(n);
    for t in 1..=opts.t_max {
        // z = y - Phi x + z_prev A_prev V / alpha
        let onsager = a_prev * v / alpha;
        let phix = batch.phi.dot(&x);
        Zip::from(&mut z).and(&batch.y).and(&phix).for_each(|zi, &yi, &pi| {
            *zi = yi - pi + onsager * *zi;
        });
        let a = alpha / (delta + v);
        let mut b = t_dot(batch.phi, &z);
        let scale = a / alpha;
        Zip::from(&mut b).and(&x).for_each(|bi, &xi| *bi = a * xi + scale * *bi);
        let mut v_new = denoise(a, &b, &mut x_new);
        if opts.damping > 0.0 {
            let d = opts.damping;
            Zip::from(&mut x_new).and(&x).for_each(|xn, &xo| *xn = (1.0 - d) * *xn + d * xo);
            v_new = (1.0 - d) * v_new + d * v;
        }
        if !v_new.is_finite() || x_new.iter().any(|xi| !xi.is_finite()) {
            return Err(divergence(index, t, &x, report));
        }
        let change = l1_change(&x_new, &x);
        std::mem::swap(&mut x, &mut x_new);
        v = v_new;
        a_prev = a;
        out.a_scalar = a;
        out.b = b;
        out.iterations = t;
        out.mse.push(mse(&x, truth));
        out.variance.push(v);
        if opts.record_iterates {
            out.iterates.push(x.clone());
        }
        if change < opts.tol {
            out.converged = true;
            break;
        }
    }
    out.x = x;
    Ok(out)
}

/// One mini-batch of GAMP with per-coordinate variances.
#[allow(clippy::too_many_arguments)]
fn gamp_batch(
    batch: GlmBatch,
    prior: &PriorSpec,
    channel: &ChannelSpec,
    lambda: &Precision,
    theta: &Array1<f64>,
    opts: &AmpOptions,
    truth: Option<ArrayView1<f64>>,
    index: usize,
    report: &AmpRunReport,
) -> Result<BatchOutcome> {
    let (m, n) = batch.phi.dim();
    let mut x = Array1::zeros(n);
    let mut sigma = Array1::zeros(n);
    for i in 0..n {
        let (mean, var) = prior.moments(lambda.at(i), theta[i]);
        x[i] = mean;
        sigma[i] = var;
    }
    let mut out = BatchOutcome {
        mse: vec![mse(&x, truth)],
        variance: vec![sigma.mean().unwrap_or(0.0)],
        iterates: if opts.record_iterates { vec![x.clone()] } else { Vec::new() },
        a_scalar: 0.0,
        a_vec: Some(Array1::zeros(n)),
        b: Array1::zeros(n),
        x: x.clone(),
        iterations: 0,
        converged: false,
    };
    if m == 0 {
        out.converged = true;
        return Ok(out);
    }
    if channel.kind == ChannelKind::Probit {
        if let Some(bad) = batch.y.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(domain(format!("probit labels must be +-1, got {bad}")));
        }
    }
    let phi2 = batch.phi.mapv(|p| p * p);
    let mut g = Array1::<f64>::zeros(m);
    let mut dg = Array1::<f64>::zeros(m);
    let mut x_new = Array1::zeros(n);
    let mut sigma_new = Array1::zeros(n);
    for t in 1..=opts.t_max {
        let v = phi2.dot(&sigma);
        let mut omega = batch.phi.dot(&x);
        Zip::from(&mut omega).and(&v).and(&g).for_each(|w, &vi, &gi| *w -= vi * gi);
        for mu in 0..m {
            if !(channel.delta + v[mu] > 0.0) {
                return Err(domain("delta + V vanished; use a positive channel noise"));
            }
            let (gm, dgm) = channel.gout_unchecked(batch.y[mu], omega[mu], v[mu]);
            g[mu] = gm;
            dg[mu] = dgm;
        }
        let a = t_dot(phi2.view(), &dg).mapv(|d| -d);
        let mut b = t_dot(batch.phi, &g);
        Zip::from(&mut b).and(&a).and(&x).for_each(|bi, &ai, &xi| *bi += ai * xi);
        for i in 0..n {
            let (mean, var) = prior.moments(lambda.at(i) + a[i], theta[i] + b[i]);
            x_new[i] = mean;
            sigma_new[i] = var;
        }
        if opts.damping > 0.0 {
            let d = opts.damping;
            Zip::from(&mut x_new).and(&x).for_each(|xn, &xo| *xn = (1.0 - d) * *xn + d * xo);
            Zip::from(&mut sigma_new).and(&sigma).for_each(|sn, &so| *sn = (1.0 - d) * *sn + d * so);
        }
        if x_new.iter().chain(sigma_new.iter()).any(|v| !v.is_finite()) {
            return Err(divergence(index, t, &x, report));
        }
        let change = l1_change(&x_new, &x);
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut sigma, &mut sigma_new);
        out.a_vec = Some(a);
        out.b = b;
        out.iterations = t;
        out.mse.push(mse(&x, truth));
        out.variance.push(sigma.mean().unwrap());
        if opts.record_iterates {
            out.iterates.push(x.clone());
        }
        if change < opts.tol {
            out.converged = true;
            break;
        }
    }
    out.x = x;
    Ok(out)
}

fn check_truth(truth: Option<ArrayView1<f64>>, n: usize) -> Result<()> {
    match truth {
        Some(t) if t.len() != n => Err(Error::Shape(format!(
            "ground truth has {} entries, expected {n}",
            t.len()
        ))),
        _ => Ok(()),
    }
}

/// Offline AMP with scalar variances for a Gaussian likelihood.
pub fn amp_offline_gaussian(
    problem: &GlmProblem,
    opts: &AmpOptions,
    truth: Option<ArrayView1<f64>>,
) -> Result<(Array1<f64>, AmpRunReport)> {
    let out = mini_amp(&[problem.as_batch()], &problem.prior, &problem.channel, opts, truth)?;
    Ok((out.estimate, out.report))
}

/// Offline GAMP for any supported channel.
pub fn gamp(
    problem: &GlmProblem,
    opts: &AmpOptions,
    truth: Option<ArrayView1<f64>>,
) -> Result<(Array1<f64>, AmpRunReport)> {
    let out = mini_gamp(&[problem.as_batch()], &problem.prior, &problem.channel, opts, truth)?;
    Ok((out.estimate, out.report))
}

#[derive(Debug, Clone)]
pub struct StreamOutput {
    pub estimate: Array1<f64>,
    pub accumulator: StreamAccumulator,
    pub report: AmpRunReport,
}

fn check_batches(batches: &[GlmBatch]) -> Result<usize> {
    let n = batches
        .first()
        .map(|b| b.phi.ncols())
        .ok_or_else(|| Error::Shape("no batches given".into()))?;
    for (k, b) in batches.iter().enumerate() {
        if b.phi.ncols() != n || b.phi.nrows() != b.y.len() {
            return Err(Error::Shape(format!(
                "batch {k}: Phi is {:?} with {} responses, expected {n} columns",
                b.phi.dim(),
                b.y.len()
            )));
        }
    }
    Ok(n)
}

/// Mini-AMP on the Gaussian fast path: scalar `A`, `V` and `Lambda`.
pub fn mini_amp(
    batches: &[GlmBatch],
    prior: &PriorSpec,
    channel: &ChannelSpec,
    opts: &AmpOptions,
    truth: Option<ArrayView1<f64>>,
) -> Result<StreamOutput> {
    let n = check_batches(batches)?;
    mini_amp_from(StreamAccumulator::scalar(n), batches, prior, channel, opts, truth)
}

/// Continues a fast-path stream from an existing accumulator.
pub fn mini_amp_from(
    mut acc: StreamAccumulator,
    batches: &[GlmBatch],
    prior: &PriorSpec,
    channel: &ChannelSpec,
    opts: &AmpOptions,
    truth: Option<ArrayView1<f64>>,
) -> Result<StreamOutput> {
    opts.validate()?;
    prior.validate()?;
    let n = check_batches(batches)?;
    check_truth(truth, n)?;
    if channel.kind != ChannelKind::Gaussian {
        return Err(Error::Unsupported(
            "the scalar fast path needs a Gaussian channel; use mini_gamp".into(),
        ));
    }
    if !(channel.delta > 0.0) {
        return Err(domain("the fast path needs a positive noise variance"));
    }
    let lambda = match acc.lambda {
        Precision::Scalar(l) => l,
        Precision::PerCoordinate(_) => {
            return Err(Error::Unsupported("fast path needs a scalar accumulator".into()))
        }
    };
    if acc.n() != n {
        return Err(Error::Shape(format!("accumulator has {} coordinates, data {n}", acc.n())));
    }
    let mut report = AmpRunReport::default();
    let mut lambda = lambda;
    let mut estimate = acc.marginals(prior).0;
    for (k, batch) in batches.iter().enumerate() {
        check_columns(batch.phi, &mut report);
        let timer = Timer::start();
        let mut out = amp_gaussian_batch(
            *batch, prior, channel.delta, lambda, &acc.theta, opts, truth, k, &report,
        )?;
        lambda += out.a_scalar;
        acc.add_scalar(out.a_scalar, &out.b);
        estimate = std::mem::take(&mut out.x);
        report.push(&mut out, timer.seconds());
    }
    Ok(StreamOutput { estimate, accumulator: acc, report })
}

/// Mini-AMP built on GAMP: per-coordinate `A` and `Lambda`, any channel.
pub fn mini_gamp(
    batches: &[GlmBatch],
    prior: &PriorSpec,
    channel: &ChannelSpec,
    opts: &AmpOptions,
    truth: Option<ArrayView1<f64>>,
) -> Result<StreamOutput> {
    let n = check_batches(batches)?;
    mini_gamp_from(StreamAccumulator::per_coordinate(n), batches, prior, channel, opts, truth)
}

pub fn mini_gamp_from(
    mut acc: StreamAccumulator,
    batches: &[GlmBatch],
    prior: &PriorSpec,
    channel: &ChannelSpec,
    opts: &AmpOptions,
    truth: Option<ArrayView1<f64>>,
) -> Result<StreamOutput> {
    opts.validate()?;
    prior.validate()?;
    let n = check_batches(batches)?;
    check_truth(truth, n)?;
    if acc.n() != n {
        return Err(Error::Shape(format!("accumulator has {} coordinates, data {n}", acc.n())));
    }
    let mut report = AmpRunReport::default();
    let mut estimate = acc.marginals(prior).0;
    for (k, batch) in batches.iter().enumerate() {
        let timer = Timer::start();
        let mut out =
            gamp_batch(*batch, prior, channel, &acc.lambda, &acc.theta, opts, truth, k, &report)?;
        let a = out.a_vec.take().unwrap();
        acc.add_vector(&a, &out.b);
        estimate = std::mem::take(&mut out.x);
        report.push(&mut out, timer.seconds());
    }
    Ok(StreamOutput { estimate, accumulator: acc, report })
}

#[derive(Debug, Clone)]
pub struct AdfOutput {
    pub estimate: Array1<f64>,
    pub accumulator: StreamAccumulator,
    /// `(samples processed, MSE)` every `record_every` samples, starting at 0.
    pub mse_trace: Vec<(usize, f64)>,
}

/// Assumed density filtering: one sample at a time, a single GAMP step each.
pub fn adf(
    phi: ArrayView2<f64>,
    y: ArrayView1<f64>,
    prior: &PriorSpec,
    channel: &ChannelSpec,
    truth: Option<ArrayView1<f64>>,
    record_every: usize,
) -> Result<AdfOutput> {
    prior.validate()?;
    let (m, n) = phi.dim();
    if y.len() != m {
        return Err(Error::Shape(format!("Phi has {m} rows but y has {} entries", y.len())));
    }
    check_truth(truth, n)?;
    let mut acc = StreamAccumulator::per_coordinate(n);
    let (mut x, mut sigma) = acc.marginals(prior);
    let mut trace = vec![(0, mse(&x, truth))];
    let record_every = record_every.max(1);
    let mut lambda = Array1::<f64>::zeros(n);
    for k in 0..m {
        let row = phi.row(k);
        let omega = row.dot(&x);
        let v: f64 = Zip::from(&row).and(&sigma).fold(0.0, |acc, &p, &s| acc + p * p * s);
        let (g, dg) = channel.gout(y[k], omega, v)?;
        for i in 0..n {
            let p = row[i];
            if p == 0.0 {
                continue;
            }
            let a = -p * p * dg;
            let b = p * g + a * x[i];
            lambda[i] += a;
            acc.theta[i] += b;
            let (mean, var) = prior.moments(lambda[i], acc.theta[i]);
            if !mean.is_finite() || !var.is_finite() {
                return Err(Error::Divergence {
                    batch: k,
                    iteration: 1,
                    last_estimate: x.to_vec(),
                    partial: None,
                });
            }
            x[i] = mean;
            sigma[i] = var;
        }
        acc.batches_processed += 1;
        if (k + 1) % record_every == 0 || k + 1 == m {
            trace.push((k + 1, mse(&x, truth)));
        }
    }
    acc.lambda = Precision::PerCoordinate(lambda);
    Ok(AdfOutput { estimate: x, accumulator: acc, mse_trace: trace })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VbOptions {
    pub delta_init: f64,
    /// Re-estimate the noise from the mean squared residual after each sweep.
    pub learn_noise: bool,
    /// With `learn_noise`, keep learning in every batch; otherwise the value
    /// reached at the end of the first batch is frozen.
    pub relearn_each_batch: bool,
    pub delta_floor: f64,
    /// Coordinate-wise (Gauss-Seidel) sweeps; `false` updates all fields at once.
    pub sequential: bool,
    pub t_max: usize,
    pub tol: f64,
}

impl Default for VbOptions {
    fn default() -> Self {
        Self {
            delta_init: 1.0,
            learn_noise: true,
            relearn_each_batch: false,
            delta_floor: 1e-12,
            sequential: true,
            t_max: 200,
            tol: 1e-13,
        }
    }
}

/// Mean-field variational Bayes for a Gaussian likelihood, streamed with the
/// same `(Lambda, Theta)` accumulation as Mini-AMP.
pub fn vb_mean_field(
    batches: &[GlmBatch],
    prior: &PriorSpec,
    opts: &VbOptions,
    truth: Option<ArrayView1<f64>>,
) -> Result<StreamOutput> {
    prior.validate()?;
    let n = check_batches(batches)?;
    check_truth(truth, n)?;
    if !(opts.delta_init > 0.0) || !(opts.delta_floor > 0.0) {
        return Err(domain("noise variance must be positive"));
    }
    if opts.t_max == 0 {
        return Err(domain("t_max must be at least 1"));
    }
    let mut acc = StreamAccumulator::per_coordinate(n);
    let mut lambda = Array1::<f64>::zeros(n);
    let mut delta = opts.delta_init;
    let mut report = AmpRunReport::default();
    for (k, batch) in batches.iter().enumerate() {
        let timer = Timer::start();
        let m = batch.phi.nrows();
        let learn = opts.learn_noise && (opts.relearn_each_batch || k == 0);
        let (mut x, _) = acc.marginals(prior);
        let mut trace = vec![mse(&x, truth)];
        if m == 0 {
            report.batch_mse.push(trace[0]);
            report.batch_variance.push(f64::NAN);
            report.iteration_mse.push(trace);
            report.iteration_variance.push(Vec::new());
            report.iterations.push(0);
            report.converged.push(true);
            report.batch_seconds.push(timer.seconds());
            report.iterates.push(Vec::new());
            report.noise.push(delta);
            acc.batches_processed += 1;
            continue;
        }
        let phit = batch.phi.t().as_standard_layout().into_owned();
        let colnorm = phit.map_axis(Axis(1), |c| c.dot(&c));
        let mut resid = &batch.y - &batch.phi.dot(&x);
        let mut iterations = 0;
        let mut converged = false;
        let mut var_mean = 0.0;
        for t in 1..=opts.t_max {
            let x_old = x.clone();
            let mut var_sum = 0.0;
            if opts.sequential {
                for i in 0..n {
                    let col = phit.row(i);
                    let field = (col.dot(&resid) + colnorm[i] * x[i]) / delta;
                    let (mean, var) =
                        prior.moments(lambda[i] + colnorm[i] / delta, acc.theta[i] + field);
                    let step = mean - x[i];
                    if step != 0.0 {
                        resid.scaled_add(-step, &col);
                    }
                    x[i] = mean;
                    var_sum += var;
                }
            } else {
                let fields = phit.dot(&resid);
                for i in 0..n {
                    let field = (fields[i] + colnorm[i] * x[i]) / delta;
                    let (mean, var) =
                        prior.moments(lambda[i] + colnorm[i] / delta, acc.theta[i] + field);
                    x[i] = mean;
                    var_sum += var;
                }
                resid = &batch.y - &batch.phi.dot(&x);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(divergence(k, t, &x_old, &report));
            }
            var_mean = var_sum / n as f64;
            if learn {
                delta = (resid.dot(&resid) / m as f64).max(opts.delta_floor);
            }
            iterations = t;
            trace.push(mse(&x, truth));
            if l1_change(&x, &x_old) < opts.tol {
                converged = true;
                break;
            }
        }
        // Natural parameters at the final estimate.
        let fields = phit.dot(&resid);
        let a = colnorm.mapv(|c| c / delta);
        let b = Array1::from_shape_fn(n, |i| (fields[i] + colnorm[i] * x[i]) / delta);
        lambda += &a;
        acc.add_vector(&a, &b);
        report.batch_mse.push(*trace.last().unwrap());
        report.batch_variance.push(var_mean);
        report.iteration_mse.push(trace);
        report.iteration_variance.push(Vec::new());
        report.iterations.push(iterations);
        report.converged.push(converged);
        report.batch_seconds.push(timer.seconds());
        report.iterates.push(Vec::new());
        report.noise.push(delta);
    }
    let (estimate, _) = acc.marginals(prior);
    Ok(StreamOutput { estimate, accumulator: acc, report })
}
