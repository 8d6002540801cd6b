//! Deterministic recursions that track AMP's mean-squared error in the large
//! system limit.
//!
//! For a prior tilted by precision `lambda`, the estimator sees the scalar
//! channel `b = lambda x + sqrt(gamma) z`. [`prior_moments`] returns the
//! resulting MSE `E` and mean posterior variance `V`; a channel maps `(E, V)`
//! back to an increment of `(lambda, gamma)`. Streaming runs these two maps
//! inside each batch and carries `(lambda, gamma)` forward.

use ndarray::{Array1, Array2};

use crate::denoisers::{ChannelKind, ChannelSpec, PriorSpec};
use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate, QuadratureRule, NORMAL_WINDOW};
use crate::special::{log_add_exp, log_cosh, normal_cdf, normal_pdf, sigmoid, truncated_normal_moments};

const REL_TOL: f64 = 1e-13;
const ABS_TOL: f64 = 1e-300;

/// `E f(w)`, `w ~ N(0,1)`, by adaptive integration with a relative tolerance,
/// so that tiny non-negative expectations keep their digits.
fn expect(f: impl Fn(f64) -> f64, extra: &[f64]) -> f64 {
    expect_tol(f, extra, ABS_TOL)
}

fn expect_tol(f: impl Fn(f64) -> f64, extra: &[f64], abs_tol: f64) -> f64 {
    let mut pts = vec![-6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0];
    pts.extend(extra.iter().filter(|p| p.is_finite()));
    integrate(|w| normal_pdf(w) * f(w), -NORMAL_WINDOW, NORMAL_WINDOW, &pts, abs_tol, REL_TOL)
}

/// Absolute accuracy for signed integrands (log-partitions), which may
/// cancel to near zero.
const MI_ABS_TOL: f64 = 1e-15;

/// Breakpoints `+-w*` (with a few companions) where a Gauss-Bernoulli
/// responsibility switches, for `B = scale * w`.
fn gb_breakpoints(rho: f64, lambda: f64, scale: f64) -> Vec<f64> {
    if rho >= 1.0 || !(scale > 0.0) {
        return Vec::new();
    }
    let s = 1.0 / (1.0 + lambda);
    let b2 = 2.0 * (((1.0 - rho) / rho).ln() - 0.5 * s.ln()) / s;
    if !(b2 > 0.0) {
        return Vec::new();
    }
    let w = b2.sqrt() / scale;
    let width = 1.0 / (s * scale * scale * w).max(1e-300);
    let mut pts = Vec::new();
    for k in [-8.0, -2.0, 0.0, 2.0, 8.0] {
        let p = w + k * width;
        if p > 0.0 && p < NORMAL_WINDOW {
            pts.push(p);
            pts.push(-p);
        }
    }
    pts
}

/// MSE and mean posterior variance of `eta(lambda, lambda x + sqrt(gamma) z)`
/// with `x` drawn from the prior.
pub fn prior_moments(prior: &PriorSpec, lambda: f64, gamma: f64) -> (f64, f64) {
    if lambda == 0.0 && gamma == 0.0 {
        let v = prior.variance();
        return (v, v);
    }
    match *prior {
        PriorSpec::Gaussian { variance, .. } => {
            let p = 1.0 / variance + lambda;
            ((1.0 / variance + gamma) / (p * p), 1.0 / p)
        }
        PriorSpec::GaussBernoulli { rho } => gb_moments(rho, lambda, gamma),
        PriorSpec::Rademacher => {
            let sg = gamma.sqrt();
            let pts = if sg > 0.0 { vec![-lambda / sg, -lambda / sg - 3.0 / sg, -lambda / sg + 3.0 / sg] } else { vec![] };
            let err = expect(
                |z| {
                    let b = lambda + sg * z;
                    let d = if b > 0.0 {
                        let t = (-2.0 * b).exp();
                        2.0 * t / (1.0 + t)
                    } else {
                        2.0 / (1.0 + (2.0 * b).exp())
                    };
                    d * d
                },
                &pts,
            );
            let var = expect(
                |z| {
                    let b = (lambda + sg * z).abs();
                    let t = (-2.0 * b).exp();
                    4.0 * t / ((1.0 + t) * (1.0 + t))
                },
                &pts,
            );
            (err, var)
        }
        PriorSpec::TruncatedNonnegGaussian { variance } => {
            let q = QuadratureRule::default();
            let sd = variance.sqrt();
            let sg = gamma.sqrt();
            let mut e = 0.0;
            let mut v = 0.0;
            for (&w, &ww) in q.nodes().iter().zip(q.weights()) {
                let x = sd * w.abs();
                for (&z, &wz) in q.nodes().iter().zip(q.weights()) {
                    let (m, var) = prior.moments(lambda, lambda * x + sg * z);
                    e += ww * wz * (m - x) * (m - x);
                    v += ww * wz * var;
                }
            }
            (e, v)
        }
    }
}

fn gb_moments(rho: f64, lambda: f64, gamma: f64) -> (f64, f64) {
    let s = 1.0 / (1.0 + lambda);
    let log_odds = (rho / (1.0 - rho)).ln() + 0.5 * s.ln();
    // (pi, 1 - pi) without cancellation.
    let resp = |b: f64| {
        if rho >= 1.0 {
            return (1.0, 0.0);
        }
        let t = log_odds + 0.5 * b * b * s;
        (sigmoid(t), sigmoid(-t))
    };
    let var = |b: f64| {
        let (pi, om) = resp(b);
        let m = b * s;
        pi * s + pi * om * m * m
    };
    let (mut e, mut v) = (0.0, 0.0);
    if rho < 1.0 {
        let sg = gamma.sqrt();
        let pts = gb_breakpoints(rho, lambda, sg);
        let e0 = expect(
            |z| {
                let b = sg * z;
                let (pi, _) = resp(b);
                let m = pi * b * s;
                m * m
            },
            &pts,
        );
        let v0 = expect(|z| var(sg * z), &pts);
        e += (1.0 - rho) * e0;
        v += (1.0 - rho) * v0;
    }
    // Slab: b ~ N(0, lambda^2 + gamma) and x | b ~ N(c b, gamma / (lambda^2 + gamma)).
    let tot = lambda * lambda + gamma;
    let sd = tot.sqrt();
    let c_gap = (gamma - lambda) / ((1.0 + lambda) * tot); // s - c
    let cond_var = gamma / tot;
    let pts = gb_breakpoints(rho, lambda, sd);
    let e1 = expect(
        |w| {
            let b = sd * w;
            let (_, om) = resp(b);
            let d = b * (c_gap - om * s);
            d * d + cond_var
        },
        &pts,
    );
    let v1 = expect(|w| var(sd * w), &pts);
    e += rho * e1;
    v += rho * v1;
    (e, v)
}

/// Bayes-optimal MSE of the scalar Gaussian channel at signal-to-noise `snr`.
pub fn mmse(prior: &PriorSpec, snr: f64) -> f64 {
    prior_moments(prior, snr, snr).0
}

/// Mutual information `I(x; sqrt(snr) x + z)` per component, equal to
/// `snr E[x^2]/2 - E log Z(snr, snr x + sqrt(snr) z)`.
pub fn scalar_mutual_information(prior: &PriorSpec, snr: f64) -> f64 {
    if snr == 0.0 {
        return 0.0;
    }
    let a = snr;
    match *prior {
        PriorSpec::Gaussian { variance, .. } => 0.5 * (1.0 + a * variance).ln(),
        PriorSpec::GaussBernoulli { rho } => {
            // With B = sqrt(a^2 + a) w on the slab, B^2 / (2(1 + a)) = a w^2 / 2
            // exactly; that term cancels against snr rho / 2 and is removed
            // analytically from the integrand.
            let slab0 = rho.ln() - 0.5 * a.ln_1p();
            if rho >= 1.0 {
                return -slab0;
            }
            let atom0 = (1.0 - rho).ln();
            let sg = a.sqrt();
            let pts = gb_breakpoints(rho, a, sg);
            let atom = expect_tol(|z| log_add_exp(atom0, slab0 + 0.5 * a * z * z / (1.0 + a)), &pts, MI_ABS_TOL);
            let sd = (a * a + a).sqrt();
            let pts = gb_breakpoints(rho, a, sd);
            let slab = expect_tol(|w| log_add_exp(atom0 - 0.5 * a * w * w, slab0), &pts, MI_ABS_TOL);
            -(1.0 - rho) * atom - rho * slab
        }
        PriorSpec::Rademacher => {
            let sg = a.sqrt();
            a - expect_tol(|z| log_cosh(a + sg * z), &[-a / sg], MI_ABS_TOL)
        }
        PriorSpec::TruncatedNonnegGaussian { variance } => {
            let q = QuadratureRule::default();
            let sd = variance.sqrt();
            let sg = a.sqrt();
            let mut acc = 0.0;
            for (&w, &ww) in q.nodes().iter().zip(q.weights()) {
                let x = sd * w.abs();
                for (&z, &wz) in q.nodes().iter().zip(q.weights()) {
                    acc += ww * wz * prior.log_partition_unchecked(a, a * x + sg * z);
                }
            }
            0.5 * a * prior.second_moment() - acc
        }
    }
}

/// `E_w f(c w)` written as an integral over `u = c w`, which stays accurate
/// when `c` is very large or very small.
fn scaled_expect(f: impl Fn(f64) -> f64, c: f64) -> f64 {
    if c == 0.0 {
        return f(0.0);
    }
    let half = (NORMAL_WINDOW * c).min(40.0);
    let mut pts = vec![0.0, -1.0, 1.0, -3.0, 3.0];
    for k in [0.5, 1.0, 3.0, 6.0] {
        pts.push(k * c);
        pts.push(-k * c);
    }
    integrate(|u| f(u) * normal_pdf(u / c) / c, -half, half, &pts, ABS_TOL, REL_TOL)
}

/// Precision gained per unit `alpha` from the channel, `-E d_omega g_out`,
/// and the matching field variance, given the current MSE and variance.
pub fn channel_increments(channel: &ChannelSpec, rho: f64, mse: f64, variance: f64, floor: f64) -> Result<(f64, f64)> {
    match channel.kind {
        ChannelKind::Gaussian => {
            let d = channel.delta.max(floor) + variance;
            let d0 = channel.delta0.max(if channel.delta0 == channel.delta { floor } else { 0.0 });
            Ok((1.0 / d, (d0 + mse) / (d * d)))
        }
        ChannelKind::Probit => {
            if !channel.is_bayes_optimal() {
                return Err(Error::Unsupported("mismatched probit state evolution".into()));
            }
            let s = (channel.delta + variance).max(floor);
            let m = (rho - variance).max(0.0);
            let c = (m / s).sqrt();
            // sum_y E_omega Phi(y omega / sqrt(s)) (-d g) = 2/s E[phi(u)(u + h(u))]
            let r = 2.0 / s
                * scaled_expect(
                    |u| {
                        let (_, mu, _) = truncated_normal_moments(u);
                        normal_pdf(u) * mu
                    },
                    c,
                );
            Ok((r, r))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeOptions {
    pub t_max: usize,
    /// Relative change in `E` below which a batch is considered converged.
    pub tol: f64,
    /// Lower bound on the noise variance inside denominators.
    pub delta_floor: f64,
    /// Track `gamma` and `V` separately even when the model is matched.
    pub force_general: bool,
}

impl Default for SeOptions {
    fn default() -> Self {
        Self { t_max: 2000, tol: 1e-12, delta_floor: 1e-100, force_general: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SePoint {
    pub lambda: f64,
    pub gamma: f64,
    pub mse: f64,
    pub variance: f64,
}

/// `batches[k][0]` is the state entering batch `k`; each further entry is one
/// iteration, holding the precision used and the MSE it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SETrajectory {
    pub alpha_b: f64,
    pub batches: Vec<Vec<SePoint>>,
}

impl SETrajectory {
    pub fn finals(&self) -> Vec<SePoint> {
        self.batches.iter().map(|b| *b.last().unwrap()).collect()
    }

    pub fn batch_mse(&self) -> Vec<f64> {
        self.batches.iter().map(|b| b.last().unwrap().mse).collect()
    }

    pub fn final_mse(&self) -> f64 {
        self.batches.last().and_then(|b| b.last()).map_or(f64::NAN, |p| p.mse)
    }

    /// Total `alpha` seen after each batch.
    pub fn alphas(&self) -> Vec<f64> {
        (1..=self.batches.len()).map(|k| k as f64 * self.alpha_b).collect()
    }
}

/// Offline state evolution at sample ratio `alpha`.
pub fn se_offline(prior: &PriorSpec, channel: &ChannelSpec, alpha: f64, opts: &SeOptions) -> Result<SETrajectory> {
    se_mini(prior, channel, alpha, 1, opts)
}

/// Mini-batch state evolution: `num_batches` batches of ratio `alpha_b`.
pub fn se_mini(
    prior: &PriorSpec,
    channel: &ChannelSpec,
    alpha_b: f64,
    num_batches: usize,
    opts: &SeOptions,
) -> Result<SETrajectory> {
    se_mini_from(prior, channel, alpha_b, num_batches, opts, 0.0, 0.0)
}

/// Continues a stream from accumulated `(lambda, gamma)`.
pub fn se_mini_from(
    prior: &PriorSpec,
    channel: &ChannelSpec,
    alpha_b: f64,
    num_batches: usize,
    opts: &SeOptions,
    lambda0: f64,
    gamma0: f64,
) -> Result<SETrajectory> {
    prior.validate()?;
    if !(alpha_b >= 0.0 && alpha_b.is_finite()) {
        return Err(domain(format!("alpha must be non-negative, got {alpha_b}")));
    }
    if opts.t_max == 0 {
        return Err(domain("t_max must be at least 1"));
    }
    let rho = prior.second_moment();
    let matched = channel.is_bayes_optimal() && !opts.force_general;
    let (mut lp, mut gp) = (lambda0, gamma0);
    let (mut e, mut v) = prior_moments(prior, lp, gp);
    let negligible = 10.0 * opts.delta_floor;
    let mut batches = Vec::with_capacity(num_batches);
    for _ in 0..num_batches {
        let mut pts = vec![SePoint { lambda: lp, gamma: gp, mse: e, variance: v }];
        let (mut l, mut g) = (lp, gp);
        for _ in 0..opts.t_max {
            let (dl, dg) = channel_increments(channel, rho, e, v, opts.delta_floor)?;
            l = lp + alpha_b * dl;
            g = if matched { l } else { gp + alpha_b * dg };
            let (e_new, v_new) = if matched {
                let e = prior_moments(prior, l, l).0;
                (e, e)
            } else {
                prior_moments(prior, l, g)
            };
            if !e_new.is_finite() || !v_new.is_finite() {
                return Err(domain("state evolution produced a non-finite value"));
            }
            let change = (e_new - e).abs();
            e = e_new;
            v = v_new;
            pts.push(SePoint { lambda: l, gamma: g, mse: e, variance: v });
            if change <= opts.tol * e || e < negligible || alpha_b == 0.0 {
                break;
            }
        }
        lp = l;
        gp = g;
        batches.push(pts);
    }
    Ok(SETrajectory { alpha_b, batches })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdePoint {
    pub alpha: f64,
    pub lambda: f64,
    pub mse: f64,
}

/// Small-batch limit `d lambda / d alpha = -E d_omega g_out(rho - m(lambda))`,
/// integrated with classical RK4. Returns one point per step.
pub fn se_adf_ode(prior: &PriorSpec, channel: &ChannelSpec, alpha_max: f64, step: f64) -> Result<Vec<OdePoint>> {
    se_adf_ode_with(prior, channel, alpha_max, step, SeOptions::default().delta_floor)
}

pub fn se_adf_ode_with(
    prior: &PriorSpec,
    channel: &ChannelSpec,
    alpha_max: f64,
    step: f64,
    floor: f64,
) -> Result<Vec<OdePoint>> {
    prior.validate()?;
    if !(step > 0.0) || !(alpha_max >= 0.0) {
        return Err(domain("need step > 0 and alpha_max >= 0"));
    }
    if !channel.is_bayes_optimal() {
        return Err(Error::Unsupported("the ADF limit is implemented for matched models".into()));
    }
    let rho = prior.second_moment();
    let rate = |l: f64| -> Result<f64> {
        let e = mmse(prior, l);
        Ok(channel_increments(channel, rho, e, e, floor)?.0)
    };
    let mut l = 0.0;
    let mut a = 0.0;
    let mut out = vec![OdePoint { alpha: 0.0, lambda: 0.0, mse: prior.variance() }];
    let steps = (alpha_max / step).round() as usize;
    for _ in 0..steps {
        let k1 = rate(l)?;
        let k2 = rate(l + 0.5 * step * k1)?;
        let k3 = rate(l + 0.5 * step * k2)?;
        let k4 = rate(l + step * k3)?;
        l += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        a += step;
        if !l.is_finite() {
            return Err(domain("ADF ODE diverged"));
        }
        out.push(OdePoint { alpha: a, lambda: l, mse: mmse(prior, l) });
    }
    Ok(out)
}

/// Asymptotic noiseless sparse-regression MSE `E0 (1 - alpha_b/rho)^(alpha/alpha_b)`,
/// zero when `alpha_b >= rho` and `alpha > 0`.
pub fn asymptotic_mse_slr(rho: f64, alpha_b: f64, alpha: f64, e0: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) || !(alpha_b > 0.0) || !(alpha >= 0.0) {
        return Err(domain("need 0 < rho <= 1, alpha_b > 0 and alpha >= 0"));
    }
    if alpha == 0.0 {
        return Ok(e0);
    }
    if alpha_b >= rho {
        return Ok(0.0);
    }
    Ok(e0 * (alpha / alpha_b * (1.0 - alpha_b / rho).ln()).exp())
}

/// Per-batch decay factor `1 - alpha_b/rho` of the asymptotic law.
pub fn asymptotic_decay_factor(rho: f64, alpha_b: f64) -> f64 {
    (1.0 - alpha_b / rho).max(0.0)
}

// ---------------------------------------------------------------------------
// Low-rank (Gaussian mixture) state evolution.
//
// Units: Y = U V^T / sqrt(N) + sqrt(delta) noise, so the field on a data
// point has precision A_V = M_U / delta and the field on a centroid row has
// precision A_U = lambda_V / delta, where lambda_V accumulates alpha_b M_V.
// ---------------------------------------------------------------------------

/// Gaussian prior `N(mean, variance I)` on the rows of `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidPrior {
    pub mean: Array1<f64>,
    pub variance: f64,
}

impl CentroidPrior {
    pub fn isotropic(rank: usize, variance: f64) -> Result<Self> {
        Self::new(Array1::zeros(rank), variance)
    }

    pub fn new(mean: Array1<f64>, variance: f64) -> Result<Self> {
        if mean.is_empty() {
            return Err(domain("rank must be at least 1"));
        }
        if !(variance > 0.0 && variance.is_finite()) || mean.iter().any(|m| !m.is_finite()) {
            return Err(domain("centroid prior needs finite mean and positive variance"));
        }
        Ok(Self { mean, variance })
    }

    pub fn rank(&self) -> usize {
        self.mean.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.mean.iter().all(|&m| m == self.mean[0])
    }

    /// `E U U^T`.
    pub fn second_moment(&self) -> Array2<f64> {
        let r = self.rank();
        let mut m = Array2::eye(r) * self.variance;
        for i in 0..r {
            for j in 0..r {
                m[[i, j]] += self.mean[i] * self.mean[j];
            }
        }
        m
    }

    /// Overlap `E U eta_U^T` for a row seen with field precision `a`.
    pub fn overlap(&self, a: &Array2<f64>) -> Result<Array2<f64>> {
        let r = self.rank();
        let p = Array2::eye(r) / self.variance + a;
        let c = spd_inverse(&p)?;
        let mut lhs = self.second_moment().dot(a);
        for i in 0..r {
            for j in 0..r {
                lhs[[i, j]] += self.mean[i] * self.mean[j] / self.variance;
            }
        }
        Ok(symmetrize(lhs.dot(&c)))
    }

    /// `E log Z_U(a, a U + a^{1/2} xi)` relative to the normalised prior.
    pub fn expected_log_partition(&self, a: &Array2<f64>) -> Result<f64> {
        let r = self.rank();
        let s2 = self.variance;
        let p = Array2::eye(r) / s2 + a;
        let c = spd_inverse(&p)?;
        let hbar = &self.mean / s2 + a.dot(&self.mean);
        let cov = a.dot(a) * s2 + a;
        let quad = hbar.dot(&c.dot(&hbar)) + (&c * &cov.t()).sum();
        let det = log_det_spd(&(Array2::eye(r) + a * s2))?;
        Ok(-0.5 * det + 0.5 * quad - 0.5 * self.mean.dot(&self.mean) / s2)
    }
}

fn symmetrize(m: Array2<f64>) -> Array2<f64> {
    let t = m.t().to_owned();
    (m + t) * 0.5
}

/// Cholesky factor of a symmetric positive semidefinite matrix; pivots below
/// `1e-14` times the diagonal scale are treated as zero.
pub(crate) fn cholesky_psd(a: &Array2<f64>) -> Array2<f64> {
    let r = a.nrows();
    let scale = (0..r).map(|i| a[[i, i]].abs()).fold(0.0, f64::max).max(1e-300);
    let mut l = Array2::<f64>::zeros((r, r));
    for j in 0..r {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 1e-14 * scale {
            continue;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..r {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / d;
        }
    }
    l
}

/// Inverse of a small symmetric positive definite matrix.
pub(crate) fn spd_inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    let r = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(r);
    for col in 0..r {
        let piv = (col..r)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap();
        if !(m[[piv, col]].abs() > 1e-300) {
            return Err(domain("singular precision matrix"));
        }
        if piv != col {
            for k in 0..r {
                m.swap([piv, k], [col, k]);
                inv.swap([piv, k], [col, k]);
            }
        }
        let d = m[[col, col]];
        for k in 0..r {
            m[[col, k]] /= d;
            inv[[col, k]] /= d;
        }
        for i in 0..r {
            if i != col {
                let f = m[[i, col]];
                if f != 0.0 {
                    for k in 0..r {
                        m[[i, k]] -= f * m[[col, k]];
                        inv[[i, k]] -= f * inv[[col, k]];
                    }
                }
            }
        }
    }
    Ok(symmetrize(inv))
}

fn log_det_spd(a: &Array2<f64>) -> Result<f64> {
    let l = cholesky_psd(a);
    let mut s = 0.0;
    for i in 0..a.nrows() {
        if !(l[[i, i]] > 0.0) {
            return Err(domain("matrix is not positive definite"));
        }
        s += 2.0 * l[[i, i]].ln();
    }
    Ok(s)
}

/// Splits a permutation-symmetric matrix into `a I + b J`.
pub fn ansatz_coefficients(m: &Array2<f64>) -> (f64, f64) {
    let r = m.nrows();
    if r == 1 {
        return (m[[0, 0]], 0.0);
    }
    let diag = (0..r).map(|i| m[[i, i]]).sum::<f64>() / r as f64;
    let off = (m.sum() - diag * r as f64) / (r * (r - 1)) as f64;
    (diag - off, off)
}

pub fn ansatz_matrix(r: usize, a: f64, b: f64) -> Array2<f64> {
    Array2::eye(r) * a + Array2::from_elem((r, r), b)
}

/// Probability that a one-hot posterior puts on the true class when the
/// informative part of the field precision is `s` (`q(0) = 1/R`).
pub fn onehot_true_probability(rank: usize, s: f64) -> f64 {
    if rank == 1 {
        return 1.0;
    }
    if s <= 0.0 {
        return 1.0 / rank as f64;
    }
    let q = QuadratureRule::gauss_hermite(121);
    let rs = s.sqrt();
    let g = |t: f64| q.expect(|xi| (-(t + rs * xi).exp()).exp());
    let h = |tau: f64| {
        q.expect(|xi| {
            let e = (tau + rs * xi).exp();
            e * (-e).exp()
        })
    };
    let lo = -s - 12.0 * rs - 40.0;
    let hi = 12.0 * rs + 5.0;
    integrate(
        |t| g(t).powi(rank as i32 - 1) * h(t + s),
        lo,
        hi,
        &[-s, -s - 3.0 * rs, 0.0, -3.0 * rs],
        0.0,
        1e-12,
    )
}

/// Predicted fraction of mislabeled points: `1 - E[Phi(sqrt(s) + xi)^(R-1)]`.
pub fn onehot_label_error(rank: usize, s: f64) -> f64 {
    if rank == 1 {
        return 0.0;
    }
    let rs = s.max(0.0).sqrt();
    1.0 - crate::quadrature::normal_expect(|xi| normal_cdf(rs + xi).powi(rank as i32 - 1), &[-rs])
}

/// `E log(1 + S)` with `S = sum_{k != c} exp(sqrt(s)(xi_k - xi_c) - s)`.
fn onehot_log_one_plus(rank: usize, s: f64) -> f64 {
    if rank == 1 {
        return 0.0;
    }
    let q = QuadratureRule::gauss_hermite(61);
    let rs = s.max(0.0).sqrt();
    let g = |t: f64| q.expect(|xi| (-(t + rs * xi).exp()).exp());
    let inner = |v: f64| 1.0 - q.expect(|x1| g(v - s - rs * x1).powi(rank as i32 - 1));
    integrate(
        |v| (-v.exp()).exp() * inner(v),
        -60.0 - s - 12.0 * rs,
        6.0,
        &[0.0, -s, -s - 3.0 * rs],
        0.0,
        1e-11,
    )
}

/// One-hot overlap `E V eta_V^T` for data seen with field precision `a`.
/// Ansatz mode uses the one-dimensional reduction; otherwise a tensor
/// Gauss-Hermite rule over the `R` noise components (`R <= 3`).
pub fn onehot_overlap(a: &Array2<f64>, use_ansatz: bool) -> Result<Array2<f64>> {
    let r = a.nrows();
    if r == 1 {
        return Ok(Array2::from_elem((1, 1), 1.0));
    }
    if use_ansatz {
        let (sa, _) = ansatz_coefficients(a);
        let q = onehot_true_probability(r, sa.max(0.0));
        let rf = r as f64;
        let av = (q - (1.0 - q) / (rf - 1.0)) / rf;
        let bv = (1.0 - q) / ((rf - 1.0) * rf);
        return Ok(ansatz_matrix(r, av, bv));
    }
    if r > 3 {
        return Err(Error::Unsupported("full-matrix one-hot overlap needs R <= 3".into()));
    }
    let order = match r {
        2 => 61,
        _ => 31,
    };
    let q = QuadratureRule::gauss_hermite(order);
    let l = cholesky_psd(a);
    let mut out = Array2::<f64>::zeros((r, r));
    let mut idx = vec![0usize; r];
    let total = order.pow(r as u32);
    let mut field = vec![0.0; r];
    for _ in 0..total {
        let mut w = 1.0;
        let xi: Vec<f64> = idx.iter().map(|&i| q.nodes()[i]).collect();
        for &i in &idx {
            w *= q.weights()[i];
        }
        for c in 0..r {
            for k in 0..r {
                let mut f = -0.5 * a[[k, k]] + a[[k, c]];
                for j in 0..r {
                    f += l[[k, j]] * xi[j];
                }
                field[k] = f;
            }
            let mx = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = field.iter().map(|f| (f - mx).exp()).sum();
            for k in 0..r {
                out[[c, k]] += w * (field[k] - mx).exp() / z / r as f64;
            }
        }
        for d in 0..r {
            idx[d] += 1;
            if idx[d] < order {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(symmetrize(out))
}

/// `E log Z_V(a, a V + a^{1/2} xi)` for the uniform one-hot prior, ansatz form.
pub fn onehot_expected_log_partition(a: &Array2<f64>) -> f64 {
    let r = a.nrows();
    let (sa, sb) = ansatz_coefficients(a);
    -(r as f64).ln() + 0.5 * (sa + sb) + onehot_log_one_plus(r, sa)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowRankMode {
    Ansatz,
    FullMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankSeOptions {
    pub mode: LowRankMode,
    pub t_max: usize,
    pub tol: f64,
    /// Overlap `a I` added to the initial centroid estimate to break the
    /// symmetry between clusters.
    pub initial_overlap: f64,
}

impl Default for LowRankSeOptions {
    fn default() -> Self {
        Self { mode: LowRankMode::Ansatz, t_max: 500, tol: 1e-12, initial_overlap: 0.0 }
    }
}

/// Overlaps after one iteration of the low-rank recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrices {
    pub m_u: Array2<f64>,
    pub m_v: Array2<f64>,
    pub lambda_v: Array2<f64>,
    /// Per-entry centroid MSE `(1/R) Tr(E U U^T - M_U)`.
    pub centroid_mse: f64,
    /// Predicted 0-1 label loss.
    pub label_error: f64,
}

impl OverlapMatrices {
    pub fn ansatz_u(&self) -> (f64, f64) {
        ansatz_coefficients(&self.m_u)
    }

    pub fn ansatz_v(&self) -> (f64, f64) {
        ansatz_coefficients(&self.m_v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankTrajectory {
    pub alpha_b: f64,
    pub batches: Vec<Vec<OverlapMatrices>>,
}

impl LowRankTrajectory {
    pub fn finals(&self) -> Vec<&OverlapMatrices> {
        self.batches.iter().map(|b| b.last().unwrap()).collect()
    }
}

/// Streaming state evolution for Gaussian-mixture clustering.
pub fn se_lowrank(
    prior: &CentroidPrior,
    delta: f64,
    alpha_b: f64,
    num_batches: usize,
    opts: &LowRankSeOptions,
) -> Result<LowRankTrajectory> {
    let r = prior.rank();
    if !(delta > 0.0) || !(alpha_b >= 0.0) {
        return Err(domain("need delta > 0 and alpha_b >= 0"));
    }
    let ansatz = opts.mode == LowRankMode::Ansatz;
    if ansatz && !prior.is_symmetric() {
        return Err(Error::Unsupported(
            "the aI + bJ ansatz needs a permutation-symmetric prior".into(),
        ));
    }
    if !ansatz && r > 3 {
        return Err(Error::Unsupported("full-matrix mode supports R <= 3".into()));
    }
    let u2 = prior.second_moment();
    let tr_u2 = (0..r).map(|i| u2[[i, i]]).sum::<f64>();
    let summarize = |m_u: Array2<f64>, m_v: Array2<f64>, lv: Array2<f64>| {
        let tr = (0..r).map(|i| m_u[[i, i]]).sum::<f64>();
        let (sa, _) = ansatz_coefficients(&m_u);
        OverlapMatrices {
            centroid_mse: (tr_u2 - tr) / r as f64,
            label_error: onehot_label_error(r, (sa / delta).max(0.0)),
            m_u,
            m_v,
            lambda_v: lv,
        }
    };
    let mut lv = Array2::<f64>::zeros((r, r));
    let mut batches = Vec::with_capacity(num_batches);
    for k in 0..num_batches {
        let mut m_u = prior.overlap(&(&lv / delta))?;
        if k == 0 && opts.initial_overlap > 0.0 {
            m_u = m_u + Array2::<f64>::eye(r) * opts.initial_overlap;
        }
        let mut pts = vec![summarize(m_u.clone(), Array2::zeros((r, r)), lv.clone())];
        let mut l = lv.clone();
        for _ in 0..opts.t_max {
            let m_v = onehot_overlap(&(&m_u / delta), ansatz)?;
            l = &lv + &(&m_v * alpha_b);
            let next = prior.overlap(&(&l / delta))?;
            let change = (&next - &m_u).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            m_u = next;
            pts.push(summarize(m_u.clone(), m_v, l.clone()));
            if change < opts.tol {
                break;
            }
        }
        lv = l;
        batches.push(pts);
    }
    Ok(LowRankTrajectory { alpha_b, batches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gb() -> PriorSpec {
        PriorSpec::gauss_bernoulli(0.3).unwrap()
    }

    #[test]
    fn untilted_moments_are_prior_variance() {
        for p in [gb(), PriorSpec::Rademacher, PriorSpec::gaussian(1.0, 2.0).unwrap()] {
            let (e, v) = prior_moments(&p, 0.0, 0.0);
            assert_eq!(e, p.variance());
            assert_eq!(v, p.variance());
        }
    }

    #[test]
    fn gauss_bernoulli_moments_match_tensor_quadrature() {
        // Independent oracle: brute-force Gauss-Hermite over (x, z) using the
        // closed-form denoiser, with 150-node rules.
        let p = gb();
        let q = QuadratureRule::gauss_hermite(150);
        for &(l, g) in &[(0.5f64, 0.5f64), (2.0, 3.0), (10.0, 10.0)] {
            let mut e = 0.0;
            let mut v = 0.0;
            for (&z, &wz) in q.nodes().iter().zip(q.weights()) {
                let (m, var) = p.moments(l, g.sqrt() * z);
                e += 0.7 * wz * m * m;
                v += 0.7 * wz * var;
                for (&x, &wx) in q.nodes().iter().zip(q.weights()) {
                    let (m, var) = p.moments(l, l * x + g.sqrt() * z);
                    e += 0.3 * wz * wx * (m - x) * (m - x);
                    v += 0.3 * wz * wx * var;
                }
            }
            let (e1, v1) = prior_moments(&p, l, g);
            assert_relative_eq!(e1, e, max_relative = 1e-7);
            assert_relative_eq!(v1, v, max_relative = 1e-7);
        }
    }

    #[test]
    fn gaussian_prior_closed_form() {
        let p = PriorSpec::gaussian(0.0, 1.0).unwrap();
        assert_relative_eq!(mmse(&p, 3.0), 0.25, epsilon = 1e-15);
        assert_relative_eq!(scalar_mutual_information(&p, 3.0), 0.5 * 4f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn gaussian_channel_increment() {
        let ch = ChannelSpec::gaussian(0.5).unwrap();
        let (dl, dg) = channel_increments(&ch, 1.0, 0.5, 0.5, 0.0).unwrap();
        assert_eq!(dl, 1.0);
        assert_eq!(dg, 1.0);
    }

    #[test]
    fn probit_increment_at_zero_overlap() {
        // m = 0: every label is a coin flip, -E dg = 2 phi(0)^2 * 2 / s = 2 / (pi s).
        let ch = ChannelSpec::probit(0.2).unwrap();
        let (r, _) = channel_increments(&ch, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(r, 2.0 / (std::f64::consts::PI * 1.2), max_relative = 1e-12);
    }

    #[test]
    fn probit_increment_matches_direct_quadrature() {
        let ch = ChannelSpec::probit(0.3).unwrap();
        let (rho, e) = (1.0f64, 0.4f64);
        let m = rho - e;
        let s = 0.3 + e;
        let direct = 2.0 * crate::quadrature::normal_expect(
            |w| {
                let omega = m.sqrt() * w;
                let (_, dg) = ch.gout_unchecked(1.0, omega, e);
                normal_cdf(omega / s.sqrt()) * -dg
            },
            &[],
        );
        let (r, _) = channel_increments(&ch, rho, e, e, 0.0).unwrap();
        assert_relative_eq!(r, direct, max_relative = 1e-10);
    }

    #[test]
    fn sign_channel_streams_past_exact_recovery() {
        let sign = ChannelSpec::probit(0.0).unwrap();
        let e = se_mini(&PriorSpec::Rademacher, &sign, 1.0, 5, &SeOptions::default()).unwrap().batch_mse();
        assert!(e[0] > 0.1);
        assert_eq!(e[4], 0.0);
    }

    #[test]
    fn mutual_information_derivative_is_half_mmse() {
        for p in [gb(), PriorSpec::Rademacher] {
            for a in [0.3, 2.0, 15.0] {
                let h = 1e-4 * a;
                let d = (scalar_mutual_information(&p, a + h) - scalar_mutual_information(&p, a - h)) / (2.0 * h);
                assert_relative_eq!(d, 0.5 * mmse(&p, a), max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn no_data_keeps_prior_variance() {
        let t = se_offline(&gb(), &ChannelSpec::gaussian(1e-8).unwrap(), 0.0, &SeOptions::default()).unwrap();
        assert_eq!(t.final_mse(), 0.3);
    }

    #[test]
    fn asymptotic_law_edges() {
        assert_eq!(asymptotic_mse_slr(0.3, 0.15, 0.0, 0.3).unwrap(), 0.3);
        assert_eq!(asymptotic_mse_slr(0.3, 0.5, 1.0, 0.3).unwrap(), 0.0);
        assert_relative_eq!(asymptotic_mse_slr(0.3, 0.15, 0.15, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(asymptotic_decay_factor(0.3, 0.15), 0.5);
        assert!(asymptotic_mse_slr(0.0, 0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn onehot_probability_limits() {
        assert_relative_eq!(onehot_true_probability(5, 0.0), 0.2);
        assert_relative_eq!(onehot_true_probability(5, 1e-12), 0.2, epsilon = 1e-9);
        assert!(onehot_true_probability(5, 50.0) > 0.99);
        // Small-s slope (R-1)/R^2.
        let s = 1e-4;
        assert_relative_eq!((onehot_true_probability(5, s) - 0.2) / s, 4.0 / 25.0, max_relative = 1e-3);
    }

    #[test]
    fn onehot_ansatz_matches_tensor_quadrature() {
        for r in [2usize, 3] {
            let a = ansatz_matrix(r, 1.7, 0.4);
            let full = onehot_overlap(&a, false).unwrap();
            let ans = onehot_overlap(&a, true).unwrap();
            for (x, y) in full.iter().zip(ans.iter()) {
                assert!((x - y).abs() < 1e-7, "R={r}: {full} vs {ans}");
            }
        }
    }

    #[test]
    fn spd_helpers() {
        let a = ndarray::array![[4.0, 1.0], [1.0, 3.0]];
        let inv = spd_inverse(&a).unwrap();
        let id = a.dot(&inv);
        assert_relative_eq!(id[[0, 0]], 1.0, epsilon = 1e-14);
        assert_relative_eq!(id[[0, 1]], 0.0, epsilon = 1e-14);
        assert_relative_eq!(log_det_spd(&a).unwrap(), 11f64.ln(), epsilon = 1e-14);
        let l = cholesky_psd(&a);
        let back = l.dot(&l.t());
        assert_relative_eq!(back[[1, 0]], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn ansatz_rejects_asymmetric_prior() {
        let p = CentroidPrior::new(ndarray::array![0.0, 1.0], 1.0).unwrap();
        assert!(matches!(
            se_lowrank(&p, 0.1, 0.3, 1, &LowRankSeOptions::default()),
            Err(Error::Unsupported(_))
        ));
    }
}
