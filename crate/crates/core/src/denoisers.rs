//! Scalar priors and output channels.
//!
//! A prior `P_X` enters every engine only through the tilted density
//! `P_X(x) exp(-A x^2 / 2 + B x) / Z(A, B)`; its mean `eta(A, B)` and variance
//! `eta'(A, B)` are the denoiser. An output channel `P(y | z)` enters through
//! `g_out(y, omega, V) = d/d omega log Z_z(y, omega, V)`.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::{LN_2, PI};

use crate::error::{check_finite, domain, Error, Result};
use crate::special::{
    log_add_exp, log_cosh, log_normal_cdf, normal_cdf, sigmoid, truncated_normal_moments,
};

/// Mean and variance of the tilted distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserOutput {
    pub mean: f64,
    pub variance: f64,
}

/// Separable prior over a scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorSpec {
    /// `rho N(0, 1) + (1 - rho) delta(x)`.
    GaussBernoulli { rho: f64 },
    /// Uniform on `{-1, +1}`.
    Rademacher,
    Gaussian { mean: f64, variance: f64 },
    /// `N(0, variance)` restricted to `x >= 0`.
    TruncatedNonnegGaussian { variance: f64 },
}

impl PriorSpec {
    pub fn gauss_bernoulli(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(domain(format!("sparsity rho must lie in (0, 1], got {rho}")));
        }
        Ok(Self::GaussBernoulli { rho })
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        check_finite("mean", mean)?;
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(domain(format!("variance must be positive, got {variance}")));
        }
        Ok(Self::Gaussian { mean, variance })
    }

    pub fn truncated_nonneg_gaussian(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(domain(format!("variance must be positive, got {variance}")));
        }
        Ok(Self::TruncatedNonnegGaussian { variance })
    }

    /// Re-checks the invariants of a value built directly from the enum.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::GaussBernoulli { rho } => Self::gauss_bernoulli(rho).map(|_| ()),
            Self::Rademacher => Ok(()),
            Self::Gaussian { mean, variance } => Self::gaussian(mean, variance).map(|_| ()),
            Self::TruncatedNonnegGaussian { variance } => {
                Self::truncated_nonneg_gaussian(variance).map(|_| ())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::GaussBernoulli { .. } | Self::Rademacher => 0.0,
            Self::Gaussian { mean, .. } => mean,
            Self::TruncatedNonnegGaussian { variance } => (2.0 * variance / PI).sqrt(),
        }
    }

    /// `E x^2` under the prior.
    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::GaussBernoulli { rho } => rho,
            Self::Rademacher => 1.0,
            Self::Gaussian { mean, variance } => variance + mean * mean,
            Self::TruncatedNonnegGaussian { variance } => variance,
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    /// Mean and variance of `P_X(x) exp(-A x^2/2 + B x)`.
    pub fn denoise(&self, a: f64, b: f64) -> Result<DenoiserOutput> {
        check_args(a, b)?;
        let (mean, variance) = self.moments(a, b);
        Ok(DenoiserOutput { mean, variance })
    }

    /// Unchecked moments for inner loops whose inputs are already validated.
    #[inline]
    pub fn moments(&self, a: f64, b: f64) -> (f64, f64) {
        match *self {
            Self::GaussBernoulli { rho } => {
                let (pi, m, s) = gb_parts(rho, a, b);
                (pi * m, pi * s + pi * (1.0 - pi) * m * m)
            }
            Self::Rademacher => {
                let t = b.tanh();
                let e = (-2.0 * b.abs()).exp();
                (t, 4.0 * e / ((1.0 + e) * (1.0 + e)))
            }
            Self::Gaussian { mean, variance } => {
                let prec = 1.0 / variance + a;
                ((mean / variance + b) / prec, 1.0 / prec)
            }
            Self::TruncatedNonnegGaussian { variance } => {
                let prec = 1.0 / variance + a;
                let sd = prec.sqrt();
                let (_, m, v) = truncated_normal_moments(b / sd);
                (m / sd, v / prec)
            }
        }
    }

    /// `log Z(A, B)` with `Z = E_{P_X} exp(-A x^2/2 + B x)`.
    pub fn log_partition(&self, a: f64, b: f64) -> Result<f64> {
        check_args(a, b)?;
        Ok(self.log_partition_unchecked(a, b))
    }

    #[inline]
    pub fn log_partition_unchecked(&self, a: f64, b: f64) -> f64 {
        match *self {
            Self::GaussBernoulli { rho } => {
                let slab = rho.ln() - 0.5 * (1.0 + a).ln() + b * b / (2.0 * (1.0 + a));
                if rho == 1.0 {
                    slab
                } else {
                    log_add_exp((1.0 - rho).ln(), slab)
                }
            }
            Self::Rademacher => -0.5 * a + log_cosh(b),
            Self::Gaussian { mean, variance } => {
                let prec = 1.0 / variance + a;
                let h = mean / variance + b;
                -0.5 * (1.0 + a * variance).ln() + h * h / (2.0 * prec)
                    - mean * mean / (2.0 * variance)
            }
            Self::TruncatedNonnegGaussian { variance } => {
                let prec = 1.0 / variance + a;
                let u = b / prec.sqrt();
                LN_2 - 0.5 * (variance * prec).ln() + 0.5 * u * u + log_normal_cdf(u)
            }
        }
    }

    /// Draws one value from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::GaussBernoulli { rho } => {
                let u: f64 = rng.random();
                let z: f64 = StandardNormal.sample(rng);
                if u < rho {
                    z
                } else {
                    0.0
                }
            }
            Self::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Gaussian { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + variance.sqrt() * z
            }
            Self::TruncatedNonnegGaussian { variance } => {
                let z: f64 = StandardNormal.sample(rng);
                variance.sqrt() * z.abs()
            }
        }
    }
}

fn check_args(a: f64, b: f64) -> Result<()> {
    check_finite("A", a)?;
    check_finite("B", b)?;
    if a < 0.0 {
        return Err(domain(format!("A must be non-negative, got {a}")));
    }
    Ok(())
}

/// Responsibility of the slab, and the slab's posterior mean and variance.
#[inline]
pub(crate) fn gb_parts(rho: f64, a: f64, b: f64) -> (f64, f64, f64) {
    let s = 1.0 / (1.0 + a);
    let m = b * s;
    if rho == 1.0 {
        return (1.0, m, s);
    }
    let logit = (rho / (1.0 - rho)).ln() + 0.5 * s.ln() + 0.5 * b * m;
    (sigmoid(logit), m, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// `y = z + N(0, delta)`.
    Gaussian,
    /// `P(y | z) = Phi(y z / sqrt(delta))`, `y` in `{-1, +1}`. `delta = 0` is
    /// the sign (perceptron) channel.
    Probit,
}

/// Output likelihood. `delta` is the noise level assumed by inference,
/// `delta0` the one used to generate data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub delta: f64,
    pub delta0: f64,
}

impl ChannelSpec {
    pub fn gaussian(delta: f64) -> Result<Self> {
        Self::new(ChannelKind::Gaussian, delta)
    }

    pub fn probit(delta: f64) -> Result<Self> {
        Self::new(ChannelKind::Probit, delta)
    }

    fn new(kind: ChannelKind, delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(domain(format!("noise variance must be >= 0, got {delta}")));
        }
        Ok(Self { kind, delta, delta0: delta })
    }

    /// Sets a ground-truth noise level different from the assumed one.
    pub fn with_true_noise(mut self, delta0: f64) -> Result<Self> {
        if !(delta0 >= 0.0 && delta0.is_finite()) {
            return Err(domain(format!("noise variance must be >= 0, got {delta0}")));
        }
        self.delta0 = delta0;
        Ok(self)
    }

    pub fn is_bayes_optimal(&self) -> bool {
        self.delta == self.delta0
    }

    /// `(g_out, d g_out / d omega)`.
    pub fn gout(&self, y: f64, omega: f64, v: f64) -> Result<(f64, f64)> {
        check_finite("y", y)?;
        check_finite("omega", omega)?;
        check_finite("V", v)?;
        let s = self.delta + v;
        if !(s > 0.0) || v < 0.0 {
            return Err(domain(format!("need V >= 0 and delta + V > 0, got V = {v}")));
        }
        if self.kind == ChannelKind::Probit && y != 1.0 && y != -1.0 {
            return Err(domain(format!("probit labels must be +-1, got {y}")));
        }
        Ok(self.gout_unchecked(y, omega, v))
    }

    #[inline]
    pub fn gout_unchecked(&self, y: f64, omega: f64, v: f64) -> (f64, f64) {
        let s = self.delta + v;
        match self.kind {
            ChannelKind::Gaussian => ((y - omega) / s, -1.0 / s),
            ChannelKind::Probit => {
                let sd = s.sqrt();
                let u = y * omega / sd;
                let (h, m, _) = truncated_normal_moments(u);
                (y * h / sd, -h * m / s)
            }
        }
    }

    /// `log Z_z(y, omega, V) = log int P(y|z) N(z; omega, V) dz`.
    pub fn log_partition(&self, y: f64, omega: f64, v: f64) -> Result<f64> {
        let s = self.delta + v;
        if !(s > 0.0) {
            return Err(domain("delta + V must be positive"));
        }
        Ok(match self.kind {
            ChannelKind::Gaussian => {
                -0.5 * (2.0 * PI * s).ln() - (y - omega) * (y - omega) / (2.0 * s)
            }
            ChannelKind::Probit => log_normal_cdf(y * omega / s.sqrt()),
        })
    }

    /// Differential entropy of the Gaussian channel `1/2 log(2 pi e delta)`.
    pub fn entropy(&self) -> Result<f64> {
        match self.kind {
            ChannelKind::Gaussian if self.delta > 0.0 => {
                Ok(0.5 * (2.0 * PI * std::f64::consts::E * self.delta).ln())
            }
            ChannelKind::Gaussian => Err(domain("entropy of a noiseless channel is not finite")),
            ChannelKind::Probit => Err(Error::Unsupported("entropy of the probit channel".into())),
        }
    }

    /// Draws an observation given `z`, using the ground-truth noise level.
    pub fn sample<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> f64 {
        let xi: f64 = StandardNormal.sample(rng);
        match self.kind {
            ChannelKind::Gaussian => z + self.delta0.sqrt() * xi,
            ChannelKind::Probit => {
                let t = z + self.delta0.sqrt() * xi;
                if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// `P(y | z)` under the ground-truth noise.
    pub fn likelihood(&self, y: f64, z: f64) -> f64 {
        match self.kind {
            ChannelKind::Gaussian => {
                let d = self.delta0;
                (-(y - z) * (y - z) / (2.0 * d)).exp() / (2.0 * PI * d).sqrt()
            }
            ChannelKind::Probit => {
                if self.delta0 == 0.0 {
                    if y * z > 0.0 {
                        1.0
                    } else if y * z < 0.0 {
                        0.0
                    } else {
                        0.5
                    }
                } else {
                    normal_cdf(y * z / self.delta0.sqrt())
                }
            }
        }
    }
}

/// Result of the sequential mean-field denoiser for the truncated prior.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldOutput {
    pub mean: Array1<f64>,
    pub variances: Array1<f64>,
    pub sweeps: usize,
    /// False when the 200-sweep budget ran out; the last iterate is kept.
    pub converged: bool,
}

pub const MEAN_FIELD_TOL: f64 = 1e-10;
pub const MEAN_FIELD_MAX_SWEEPS: usize = 200;

/// Approximate mean of `prod_k N_{>=0}(x_k; 0, s2) exp(-x^T A x / 2 + B^T x)`
/// by sequential scalar updates
/// `x_k = eta~(A_kk, B_k - 1/2 sum_{l != k} A_kl x_l)`, k ascending.
pub fn truncated_mean_field_denoise(
    variance: f64,
    a: &Array2<f64>,
    b: ArrayView1<f64>,
    warm_start: ArrayView1<f64>,
) -> Result<MeanFieldOutput> {
    let r = b.len();
    if a.dim() != (r, r) || warm_start.len() != r {
        return Err(Error::Shape(format!(
            "A is {:?}, B has {} entries, warm start has {}",
            a.dim(),
            r,
            warm_start.len()
        )));
    }
    for k in 0..r {
        if !(a[[k, k]] > 0.0) {
            return Err(domain(format!("A[{k},{k}] must be positive")));
        }
        for l in 0..r {
            check_finite("A", a[[k, l]])?;
        }
        check_finite("B", b[k])?;
    }
    let prior = PriorSpec::truncated_nonneg_gaussian(variance)?;
    let mut mean = warm_start.to_owned();
    let field = |mean: &Array1<f64>, k: usize| -> f64 {
        let coupling: f64 = (0..r).filter(|&l| l != k).map(|l| a[[k, l]] * mean[l]).sum();
        b[k] - 0.5 * coupling
    };
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < MEAN_FIELD_MAX_SWEEPS {
        sweeps += 1;
        let mut change = 0.0_f64;
        for k in 0..r {
            let (m, _) = prior.moments(a[[k, k]], field(&mean, k));
            change = change.max((m - mean[k]).abs());
            mean[k] = m;
        }
        if change < MEAN_FIELD_TOL {
            converged = true;
            break;
        }
    }
    let variances = Array1::from_shape_fn(r, |k| prior.moments(a[[k, k]], field(&mean, k)).1);
    Ok(MeanFieldOutput { mean, variances, sweeps, converged })
}

/// Covariance estimate from per-component variances via linear response:
/// diagonal `sum_i s_ik`, off-diagonal `-1/2 A_kl sum_i s_ik s_il`.
pub fn linear_response_covariance(a: &Array2<f64>, variances: &Array2<f64>) -> Result<Array2<f64>> {
    let r = variances.ncols();
    if a.dim() != (r, r) {
        return Err(Error::Shape(format!(
            "A is {:?} but variances have {} columns",
            a.dim(),
            r
        )));
    }
    if a.iter().chain(variances.iter()).any(|v| !v.is_finite()) {
        return Err(domain("inputs must be finite"));
    }
    let mut out = Array2::zeros((r, r));
    for k in 0..r {
        out[[k, k]] = variances.column(k).sum();
        for l in (k + 1)..r {
            let cross = variances.column(k).dot(&variances.column(l));
            // Average the two couplings so the output is symmetric exactly.
            let v = -0.25 * (a[[k, l]] + a[[l, k]]) * cross;
            out[[k, l]] = v;
            out[[l, k]] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;
    use ndarray::array;

    /// Moments of the tilted gauss-bernoulli density by direct integration:
    /// the atom contributes exactly, the slab by adaptive quadrature.
    fn gb_oracle(rho: f64, a: f64, b: f64) -> (f64, f64, f64) {
        let slab = |k: i32| {
            integrate(
                |x| {
                    let w = (-0.5 * x * x - 0.5 * a * x * x + b * x).exp()
                        / (2.0 * PI).sqrt();
                    w * x.powi(k)
                },
                -40.0,
                40.0,
                &[b / (1.0 + a)],
                1e-16,
                1e-15,
            )
        };
        let z = (1.0 - rho) + rho * slab(0);
        let m1 = rho * slab(1) / z;
        let m2 = rho * slab(2) / z;
        (z.ln(), m1, m2 - m1 * m1)
    }

    #[test]
    fn gaussian_conjugacy() {
        let p = PriorSpec::gaussian(0.0, 1.0).unwrap();
        let d = p.denoise(1.0, 2.0).unwrap();
        assert_relative_eq!(d.mean, 1.0, epsilon = 1e-15);
        assert_relative_eq!(d.variance, 0.5, epsilon = 1e-15);
        assert_eq!(p.log_partition(0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rademacher_symmetry() {
        let p = PriorSpec::Rademacher;
        for a in [0.0, 1.0, 7.5] {
            let d = p.denoise(a, 0.0).unwrap();
            assert_eq!(d.mean, 0.0);
            assert_relative_eq!(d.variance, 1.0, epsilon = 1e-15);
        }
        assert_relative_eq!(
            p.log_partition(0.0, 1.0).unwrap(),
            1.0_f64.cosh().ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn gauss_bernoulli_untilted_is_prior() {
        let p = PriorSpec::gauss_bernoulli(0.3).unwrap();
        let d = p.denoise(0.0, 0.0).unwrap();
        assert_eq!(d.mean, 0.0);
        assert_relative_eq!(d.variance, 0.3, epsilon = 1e-15);
        assert_eq!(p.second_moment(), 0.3);
    }

    #[test]
    fn gauss_bernoulli_matches_quadrature_oracle() {
        let p = PriorSpec::gauss_bernoulli(0.3).unwrap();
        let (_, m, v) = gb_oracle(0.3, 2.0, 1.5);
        let d = p.denoise(2.0, 1.5).unwrap();
        assert_relative_eq!(d.mean, m, epsilon = 1e-10);
        assert_relative_eq!(d.variance, v, epsilon = 1e-10);

        let (logz, _, _) = gb_oracle(0.3, 1.0, 2.0);
        assert_relative_eq!(p.log_partition(1.0, 2.0).unwrap(), logz, epsilon = 1e-10);
    }

    #[test]
    fn stable_for_large_fields() {
        for p in [
            PriorSpec::gauss_bernoulli(0.3).unwrap(),
            PriorSpec::Rademacher,
            PriorSpec::gaussian(0.5, 2.0).unwrap(),
            PriorSpec::truncated_nonneg_gaussian(0.1).unwrap(),
        ] {
            for b in [-1e3, -250.0, 0.0, 250.0, 1e3] {
                let d = p.denoise(3.0, b).unwrap();
                assert!(d.mean.is_finite() && d.variance.is_finite(), "{p:?} b={b}");
                assert!(d.variance >= 0.0);
                assert!(p.log_partition(3.0, b).unwrap().is_finite());
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = PriorSpec::Rademacher;
        assert!(matches!(p.denoise(f64::NAN, 0.0), Err(Error::Domain(_))));
        assert!(matches!(p.denoise(1.0, f64::INFINITY), Err(Error::Domain(_))));
        assert!(p.log_partition(f64::NAN, 0.0).is_err());
        assert!(PriorSpec::gauss_bernoulli(0.0).is_err());
        assert!(PriorSpec::gauss_bernoulli(1.2).is_err());
        assert!(PriorSpec::gaussian(0.0, -1.0).is_err());
        assert!(ChannelSpec::gaussian(-0.1).is_err());
    }

    #[test]
    fn truncated_scalar_matches_quadrature() {
        let s2 = 0.1;
        let p = PriorSpec::truncated_nonneg_gaussian(s2).unwrap();
        for &(a, b) in &[(0.0, 0.0), (2.0, 1.0), (5.0, -3.0), (1.0, -40.0)] {
            let mom = |k: i32| {
                integrate(
                    |x| (-x * x / (2.0 * s2) - 0.5 * a * x * x + b * x).exp() * x.powi(k),
                    0.0,
                    20.0,
                    &[0.05, 0.5, 2.0],
                    0.0,
                    1e-14,
                )
            };
            let z = mom(0);
            let m = mom(1) / z;
            let v = mom(2) / z - m * m;
            let d = p.denoise(a, b).unwrap();
            assert_relative_eq!(d.mean, m, max_relative = 1e-9);
            assert_relative_eq!(d.variance, v, max_relative = 1e-7);
            // log Z relative to the normalised prior: 2 / sqrt(2 pi s2) int ...
            let logz = (2.0 / (2.0 * PI * s2).sqrt() * z).ln();
            assert_relative_eq!(p.log_partition(a, b).unwrap(), logz, epsilon = 1e-9);
        }
    }

    #[test]
    fn gaussian_channel_closed_form() {
        let c = ChannelSpec::gaussian(0.5).unwrap();
        let (g, dg) = c.gout(1.0, 0.0, 0.5).unwrap();
        assert_relative_eq!(g, 1.0, epsilon = 1e-15);
        assert_relative_eq!(dg, -1.0, epsilon = 1e-15);
        assert!(c.gout(1.0, 0.0, -0.6).is_err());
        assert!(ChannelSpec::gaussian(0.0).unwrap().gout(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn probit_positive_evidence_pushes_up() {
        let c = ChannelSpec::probit(0.2).unwrap();
        for v in [1e-6, 0.1, 1.0, 10.0] {
            let (g, dg) = c.gout(1.0, 0.0, v).unwrap();
            assert!(g > 0.0);
            assert!(dg < 0.0);
        }
        assert!(c.gout(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn probit_matches_quadrature_derivative() {
        let c = ChannelSpec::probit(0.1).unwrap();
        let (y, w, v) = (-1.0, 0.3, 0.2);
        // log Z_z(omega) = log int Phi(y z / sqrt(delta)) N(z; omega, V) dz
        let logz = |omega: f64| {
            integrate(
                |z| {
                    normal_cdf(y * z / 0.1f64.sqrt())
                        * (-(z - omega) * (z - omega) / (2.0 * v)).exp()
                        / (2.0 * PI * v).sqrt()
                },
                omega - 12.0,
                omega + 12.0,
                &[0.0, omega],
                0.0,
                1e-15,
            )
            .ln()
        };
        let h = 1e-4;
        let fd_g = (logz(w + h) - logz(w - h)) / (2.0 * h);
        let fd_dg = (logz(w + h) - 2.0 * logz(w) + logz(w - h)) / (h * h);
        let (g, dg) = c.gout(y, w, v).unwrap();
        assert_relative_eq!(g, fd_g, epsilon = 1e-8);
        assert_relative_eq!(dg, fd_dg, epsilon = 1e-6);
        assert_relative_eq!(c.log_partition(y, w, v).unwrap(), logz(w), epsilon = 1e-10);
    }

    #[test]
    fn sign_channel_extreme_arguments() {
        let c = ChannelSpec::probit(0.0).unwrap();
        for &(y, w, v) in &[(1.0, -30.0, 1.0), (-1.0, 30.0, 1.0), (1.0, 30.0, 1.0), (1.0, -3.0, 1e-2)] {
            let (g, dg) = c.gout(y, w, v).unwrap();
            assert!(g.is_finite() && dg.is_finite(), "y={y} w={w}");
            assert!(dg <= 0.0);
        }
        // Far on the wrong side the Mills ratio grows linearly: g ~ |omega| / V.
        let (g, _) = c.gout(1.0, -30.0, 1.0).unwrap();
        assert_relative_eq!(g, 30.0, max_relative = 2e-3);
    }

    #[test]
    fn probit_large_delta_is_nearly_linear() {
        // For delta >> 1, Phi(z/sqrt(delta)) ~ 1/2 + z phi(0)/sqrt(delta): g is
        // almost constant in omega and dg vanishes.
        let c = ChannelSpec::probit(1e6).unwrap();
        let (g0, dg0) = c.gout(1.0, 0.0, 1.0).unwrap();
        let (g1, _) = c.gout(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(g0, 2.0 * crate::special::normal_pdf(0.0) / 1e3, max_relative = 1e-5);
        assert_relative_eq!(g0, g1, max_relative = 1e-3);
        assert!(dg0.abs() < 1e-5);
    }

    #[test]
    fn mean_field_single_component_is_exact() {
        let a = array![[2.5]];
        let b = array![0.7];
        let out = truncated_mean_field_denoise(0.1, &a, b.view(), array![0.0].view()).unwrap();
        let exact = PriorSpec::truncated_nonneg_gaussian(0.1).unwrap().denoise(2.5, 0.7).unwrap();
        assert!(out.converged);
        assert_relative_eq!(out.mean[0], exact.mean, epsilon = 1e-14);
        assert_relative_eq!(out.variances[0], exact.variance, epsilon = 1e-14);
    }

    #[test]
    fn mean_field_diagonal_decouples() {
        let a = array![[1.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 0.5]];
        let b = array![0.3, -1.0, 2.0];
        let out = truncated_mean_field_denoise(0.5, &a, b.view(), Array1::zeros(3).view()).unwrap();
        let p = PriorSpec::truncated_nonneg_gaussian(0.5).unwrap();
        for k in 0..3 {
            let d = p.denoise(a[[k, k]], b[k]).unwrap();
            assert_relative_eq!(out.mean[k], d.mean, epsilon = 1e-14);
        }
    }

    #[test]
    fn mean_field_two_components_close_to_tensor_quadrature() {
        let s2 = 0.5;
        let a = array![[2.0, 0.005], [0.005, 3.0]];
        let b = array![0.8, 0.4];
        let out = truncated_mean_field_denoise(s2, &a, b.view(), Array1::zeros(2).view()).unwrap();
        // Tensor-grid quadrature of the exact 2-D tilted density on [0, 8]^2.
        let n = 1600;
        let h = 8.0 / n as f64;
        let (mut z, mut m0, mut m1) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let x0 = (i as f64 + 0.5) * h;
            for j in 0..n {
                let x1 = (j as f64 + 0.5) * h;
                let e = -(x0 * x0 + x1 * x1) / (2.0 * s2)
                    - 0.5 * (a[[0, 0]] * x0 * x0 + 2.0 * a[[0, 1]] * x0 * x1 + a[[1, 1]] * x1 * x1)
                    + b[0] * x0
                    + b[1] * x1;
                let w = e.exp();
                z += w;
                m0 += w * x0;
                m1 += w * x1;
            }
        }
        assert!((out.mean[0] - m0 / z).abs() < 1e-3);
        assert!((out.mean[1] - m1 / z).abs() < 1e-3);
    }

    #[test]
    fn linear_response_shapes_and_symmetry() {
        let a = array![[1.0, 0.4], [0.4, 2.0]];
        let s = array![[0.2, 0.3]];
        let c = linear_response_covariance(&a, &s).unwrap();
        assert_relative_eq!(c[[0, 0]], 0.2);
        assert_relative_eq!(c[[1, 1]], 0.3);
        assert_relative_eq!(c[[0, 1]], -0.5 * 0.4 * 0.2 * 0.3, epsilon = 1e-16);
        assert_eq!(c, c.t());

        let diag = array![[1.0, 0.0], [0.0, 2.0]];
        let s = array![[0.2, 0.3], [0.1, 0.7]];
        let c = linear_response_covariance(&diag, &s).unwrap();
        assert_eq!(c[[0, 1]], 0.0);
        assert_eq!(c[[1, 0]], 0.0);
        assert!(linear_response_covariance(&array![[1.0]], &s).is_err());
    }
}
