//! Replica mutual information, free energies and the landscapes built from them.
//!
//! Values for the Gaussian channel are rigorous; for other channels the
//! free energy is the conjectured replica formula.

use ndarray::Array2;

use crate::denoisers::{ChannelKind, ChannelSpec, PriorSpec};
use crate::error::{domain, Result};
use crate::quadrature::{integrate, NORMAL_WINDOW};
use crate::special::{log_normal_cdf, normal_cdf, normal_pdf};
use crate::state_evolution::{
    mmse, onehot_expected_log_partition, onehot_overlap, scalar_mutual_information, se_mini_from, CentroidPrior,
    SeOptions,
};

fn check(delta: f64, e: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(domain(format!("the landscape needs delta > 0, got {delta}")));
    }
    if !(e > 0.0) || !e.is_finite() {
        return Err(domain(format!("E must be positive, got {e}")));
    }
    Ok(())
}

fn bracket(alpha: f64, delta: f64, e: f64) -> f64 {
    0.5 * alpha * ((e / delta).ln_1p() - e / (delta + e))
}

/// Offline replica mutual information per variable for the Gaussian channel,
/// at trial MSE `e`. Its global minimiser is the MMSE.
pub fn irs_offline(prior: &PriorSpec, delta: f64, alpha: f64, e: f64) -> Result<f64> {
    check(delta, e)?;
    prior.validate()?;
    let snr = alpha / (delta + e);
    Ok(bracket(alpha, delta, e) + scalar_mutual_information(prior, snr))
}

/// Per-batch potential given side information of precision `lambda`. At
/// `lambda = 0` it equals `irs_offline(alpha_b) - alpha_b / 2`.
pub fn irs_mini(prior: &PriorSpec, delta: f64, alpha_b: f64, lambda: f64, e: f64) -> Result<f64> {
    check(delta, e)?;
    prior.validate()?;
    if !(lambda >= 0.0) {
        return Err(domain("lambda must be non-negative"));
    }
    let snr = lambda + alpha_b / (delta + e);
    // -E log E_x~ exp(..) = I(snr) + 1/2, followed by the -(1 + alpha_b)/2 constant.
    Ok(bracket(alpha_b, delta, e) + (scalar_mutual_information(prior, snr) + 0.5) - 0.5 * (1.0 + alpha_b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points: usize,
    pub e_min: f64,
    /// Upper end as a multiple of the prior variance.
    pub e_max_factor: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points: 400, e_min: 1e-12, e_max_factor: 2.0 }
    }
}

impl GridSpec {
    pub fn refined(&self) -> Self {
        Self { points: 2 * self.points - 1, ..*self }
    }

    pub fn values(&self, prior_variance: f64) -> Vec<f64> {
        let lo = self.e_min.ln();
        let hi = (self.e_max_factor * prior_variance).ln();
        let n = self.points.max(2);
        (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub e: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeScan {
    pub lambda: f64,
    pub e: Vec<f64>,
    pub values: Vec<f64>,
    /// Local minima, refined, sorted by `e`.
    pub minima: Vec<Minimum>,
    pub global: Minimum,
    /// Two minima tie within `1e-12`.
    pub transition_point: bool,
}

/// `2 (delta + E)^2 / alpha_b` times the slope of the per-batch potential:
/// `E - mmse(lambda + alpha_b / (delta + E))`. Exact, unlike differences of
/// potential values, which are flat to rounding when `E << delta`.
fn slope_sign(prior: &PriorSpec, delta: f64, alpha_b: f64, lambda: f64, e: f64) -> f64 {
    e - mmse(prior, lambda + alpha_b / (delta + e))
}

/// Bisection in `log E` for the root of the slope inside `[lo, hi]`.
fn refine_root(prior: &PriorSpec, delta: f64, alpha_b: f64, lambda: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if slope_sign(prior, delta, alpha_b, lambda, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Samples `irs_mini` on a log grid. Local minima are located where the
/// slope changes sign from negative to positive and refined by bisection.
pub fn scan_landscape(prior: &PriorSpec, delta: f64, alpha_b: f64, lambda: f64, grid: &GridSpec) -> Result<LandscapeScan> {
    check(delta, 1.0)?;
    let e = grid.values(prior.variance());
    let values = e.iter().map(|&x| irs_mini(prior, delta, alpha_b, lambda, x)).collect::<Result<Vec<_>>>()?;
    let slopes: Vec<f64> = e.iter().map(|&x| slope_sign(prior, delta, alpha_b, lambda, x)).collect();
    let mut minima = Vec::new();
    for i in 0..e.len() - 1 {
        if slopes[i] < 0.0 && slopes[i + 1] >= 0.0 {
            let x = refine_root(prior, delta, alpha_b, lambda, e[i], e[i + 1]);
            minima.push(Minimum { e: x, value: irs_mini(prior, delta, alpha_b, lambda, x)? });
        }
    }
    let global = match minima.iter().min_by(|a, b| a.value.total_cmp(&b.value)) {
        Some(m) => *m,
        None => {
            // Monotone on the grid: the minimum sits at an end.
            let (gi, _) = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
            Minimum { e: e[gi], value: values[gi] }
        }
    };
    let ties: Vec<&Minimum> = minima.iter().filter(|m| m.value - global.value < 1e-12).collect();
    let transition_point = ties.len() > 1;
    // At coexistence the smaller error is the information-theoretic choice.
    let global = ties.into_iter().min_by(|a, b| a.e.total_cmp(&b.e)).copied().unwrap_or(global);
    Ok(LandscapeScan { lambda, e, values, minima, global, transition_point })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmseStep {
    /// Precision entering the batch.
    pub lambda: f64,
    pub mmse: f64,
    pub minima: usize,
}

/// Streaming MMSE: global argmin of the per-batch potential, then
/// `lambda <- lambda + alpha_b / (delta + MMSE)`.
pub fn mmse_recursion(
    prior: &PriorSpec,
    delta: f64,
    alpha_b: f64,
    num_batches: usize,
    grid: &GridSpec,
) -> Result<Vec<MmseStep>> {
    let mut lambda = 0.0;
    let mut out = Vec::with_capacity(num_batches);
    for _ in 0..num_batches {
        let scan = scan_landscape(prior, delta, alpha_b, lambda, grid)?;
        out.push(MmseStep { lambda, mmse: scan.global.e, minima: scan.minima.len() });
        lambda += alpha_b / (delta + scan.global.e);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Optimal,
    Suboptimal,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCell {
    pub alpha_b: f64,
    pub batch: usize,
    pub mmse: f64,
    pub amp_mse: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    pub alpha_b: Vec<f64>,
    pub num_batches: usize,
    pub cells: Vec<PhaseCell>,
}

impl PhaseDiagram {
    pub fn cell(&self, alpha_index: usize, batch: usize) -> &PhaseCell {
        &self.cells[alpha_index * self.num_batches + batch]
    }
}

/// Below this both MSEs count as zero.
pub const ZERO_MSE: f64 = 1e-6;

/// Compares the streaming MMSE with what AMP reaches, batch by batch.
pub fn phase_diagram(
    prior: &PriorSpec,
    delta: f64,
    alpha_b: &[f64],
    num_batches: usize,
    grid: &GridSpec,
    se: &SeOptions,
) -> Result<PhaseDiagram> {
    let channel = ChannelSpec::gaussian(delta)?;
    let mut cells = Vec::with_capacity(alpha_b.len() * num_batches);
    for &ab in alpha_b {
        let mm = mmse_recursion(prior, delta, ab, num_batches, grid)?;
        let traj = se_mini_from(prior, &channel, ab, num_batches, se, 0.0, 0.0)?;
        for (k, (m, amp)) in mm.iter().zip(traj.batch_mse()).enumerate() {
            let phase = if m.mmse < ZERO_MSE && amp < ZERO_MSE {
                Phase::Zero
            } else if amp - m.mmse > 1e-6 * m.mmse.max(ZERO_MSE) {
                Phase::Suboptimal
            } else {
                Phase::Optimal
            };
            cells.push(PhaseCell { alpha_b: ab, batch: k, mmse: m.mmse, amp_mse: amp, phase });
        }
    }
    Ok(PhaseDiagram { alpha_b: alpha_b.to_vec(), num_batches, cells })
}

/// `E log Z_out` over `y`, `omega ~ N(0, m)` and `z | omega ~ N(omega, rho - m)`.
fn expected_log_partition_out(channel: &ChannelSpec, rho: f64, m: f64) -> Result<f64> {
    let v = rho - m;
    match channel.kind {
        ChannelKind::Gaussian => {
            let s = channel.delta + v;
            if !(s > 0.0) {
                return Err(domain("channel variance must be positive"));
            }
            Ok(-0.5 * (2.0 * std::f64::consts::PI * s).ln() - 0.5 * (v + channel.delta0) / s)
        }
        ChannelKind::Probit => {
            let s = channel.delta + v;
            let s0 = channel.delta0 + v;
            let sd = m.max(0.0).sqrt();
            // Both labels contribute the same by symmetry.
            let f = |w: f64| {
                let o = sd * w;
                2.0 * normal_cdf(o / s0.sqrt()) * log_normal_cdf(o / s.sqrt())
            };
            Ok(integrate(
                |w| normal_pdf(w) * f(w),
                -NORMAL_WINDOW,
                NORMAL_WINDOW,
                &[-3.0, 0.0, 3.0],
                1e-15,
                1e-13,
            ))
        }
    }
}

/// Replica free energy `phi(m, m_hat) = m m_hat / 2 - E log Z_x - alpha E log Z_out`.
pub fn replica_free_energy_glm(prior: &PriorSpec, channel: &ChannelSpec, m: f64, m_hat: f64, alpha: f64) -> Result<f64> {
    replica_free_energy_glm_stream(prior, channel, m, m_hat, 0.0, alpha)
}

/// Streaming variant: `m (lambda - lambda_prev) / 2 - E log Z_x(lambda) - alpha_b E log Z_out`.
pub fn replica_free_energy_glm_stream(
    prior: &PriorSpec,
    channel: &ChannelSpec,
    m: f64,
    lambda: f64,
    lambda_prev: f64,
    alpha_b: f64,
) -> Result<f64> {
    prior.validate()?;
    let rho = prior.second_moment();
    if !(0.0..=rho).contains(&m) {
        return Err(domain(format!("overlap m must lie in [0, {rho}], got {m}")));
    }
    if !(lambda >= 0.0) {
        return Err(domain("m_hat must be non-negative"));
    }
    // E log Z_x(l, l x + sqrt(l) z) = l rho / 2 - I(l).
    let elz = 0.5 * lambda * rho - scalar_mutual_information(prior, lambda);
    Ok(0.5 * m * (lambda - lambda_prev) - elz - alpha_b * expected_log_partition_out(channel, rho, m)?)
}

/// `alpha H(y|z)` for the Gaussian channel, the constant separating the free
/// energy from the mutual information.
pub fn channel_entropy_term(channel: &ChannelSpec, alpha: f64) -> Result<f64> {
    Ok(alpha * channel.entropy()?)
}

/// Low-rank free energy per row of `U` with `alpha = M/N`:
/// `alpha/(2 delta) Tr(M_U M_V) - E log Z_U(alpha M_V/delta) - alpha E log Z_V(M_U/delta)`.
pub fn replica_free_energy_lowrank(
    prior: &CentroidPrior,
    m_u: &Array2<f64>,
    m_v: &Array2<f64>,
    delta: f64,
    alpha: f64,
) -> Result<f64> {
    let lambda = m_v * alpha;
    replica_free_energy_lowrank_stream(prior, m_u, &lambda, &Array2::zeros(m_u.raw_dim()), delta, alpha)
}

/// Streaming variant in terms of the accumulated `lambda_V`:
/// `Tr(M_U (lambda - lambda_prev))/(2 delta) - E log Z_U(lambda/delta) - alpha_b E log Z_V(M_U/delta)`.
pub fn replica_free_energy_lowrank_stream(
    prior: &CentroidPrior,
    m_u: &Array2<f64>,
    lambda: &Array2<f64>,
    lambda_prev: &Array2<f64>,
    delta: f64,
    alpha_b: f64,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(domain("delta must be positive"));
    }
    let r = prior.rank();
    if m_u.dim() != (r, r) || lambda.dim() != (r, r) || lambda_prev.dim() != (r, r) {
        return Err(crate::Error::Shape(format!("overlaps must be {r}x{r}")));
    }
    let tr = (m_u * &(lambda - lambda_prev).t()).sum();
    let elu = prior.expected_log_partition(&(lambda / delta))?;
    let elv = onehot_expected_log_partition(&(m_u / delta));
    Ok(tr / (2.0 * delta) - elu - alpha_b * elv)
}

/// Overlaps predicted for one-hot rows, re-exported for free-energy checks.
pub fn lowrank_overlap_v(m_u: &Array2<f64>, delta: f64) -> Result<Array2<f64>> {
    onehot_overlap(&(m_u / delta), true)
}

/// Offline clustering is impossible below `alpha_c = R^2 delta^2`.
pub fn undetectability_threshold(rank: usize, delta: f64) -> f64 {
    let r = rank as f64;
    r * r * delta * delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_evolution::se_offline;
    use approx::assert_relative_eq;

    fn gb() -> PriorSpec {
        PriorSpec::gauss_bernoulli(0.3).unwrap()
    }

    #[test]
    fn threshold_values() {
        assert_relative_eq!(undetectability_threshold(5, 0.1), 0.25, epsilon = 1e-15);
        assert_eq!(undetectability_threshold(3, 0.0), 0.0);
        assert_eq!(undetectability_threshold(1, 1.0), 1.0);
    }

    #[test]
    fn noiseless_landscape_rejected() {
        assert!(irs_offline(&gb(), 0.0, 1.0, 0.1).is_err());
        assert!(irs_offline(&gb(), 1.0, 1.0, 0.0).is_err());
        assert!(irs_mini(&gb(), 1.0, 1.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn mini_at_zero_lambda_is_offline_minus_half_alpha() {
        for &(ab, e) in &[(0.35, 0.1), (1.2, 1e-4), (0.05, 0.5)] {
            let off = irs_offline(&gb(), 1e-2, ab, e).unwrap();
            let mini = irs_mini(&gb(), 1e-2, ab, 0.0, e).unwrap();
            assert_relative_eq!(mini - off, -0.5 * ab, epsilon = 1e-12);
        }
    }

    #[test]
    fn no_data_minimum_at_prior_variance() {
        let scan = scan_landscape(&gb(), 1.0, 1e-9, 0.0, &GridSpec::default()).unwrap();
        assert!((scan.global.e / 0.3 - 1.0).abs() < 1e-3, "{:?}", scan.global);
    }

    #[test]
    fn large_side_information_pushes_minimum_to_zero() {
        let scan = scan_landscape(&gb(), 1e-2, 0.5, 1e9, &GridSpec::default()).unwrap();
        assert!(scan.global.e < 1e-8, "{:?}", scan.global);
    }

    #[test]
    fn slope_vanishes_at_se_fixed_point() {
        let prior = gb();
        for &(delta, alpha) in &[(0.05, 0.8), (0.5, 1.5)] {
            let t = se_offline(&prior, &ChannelSpec::gaussian(delta).unwrap(), alpha, &SeOptions::default()).unwrap();
            let e = t.final_mse();
            let h = 1e-5 * e;
            let d = (irs_offline(&prior, delta, alpha, e + h).unwrap() - irs_offline(&prior, delta, alpha, e - h).unwrap())
                / (2.0 * h);
            assert!(d.abs() < 1e-6, "slope {d}");
        }
    }

    #[test]
    fn free_energy_differs_from_irs_by_constant() {
        let prior = gb();
        let (delta, alpha) = (0.1, 0.7);
        let ch = ChannelSpec::gaussian(delta).unwrap();
        let h = channel_entropy_term(&ch, alpha).unwrap();
        for m in [0.01, 0.1, 0.25] {
            let e = 0.3 - m;
            let phi = replica_free_energy_glm(&prior, &ch, m, alpha / (delta + e), alpha).unwrap();
            assert_relative_eq!(irs_offline(&prior, delta, alpha, e).unwrap(), phi - h, epsilon = 1e-10);
        }
        assert!(replica_free_energy_glm(&prior, &ch, 0.4, 1.0, alpha).is_err());
    }
}
