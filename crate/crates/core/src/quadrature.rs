//! Gaussian expectations.
//!
//! Two integrators are provided. [`QuadratureRule`] is a probabilists'
//! Gauss-Hermite rule, exact for polynomials and very accurate for smooth
//! integrands. [`normal_expect`] integrates against the standard normal density
//! with an adaptive Gauss-Kronrod scheme and caller-supplied breakpoints; it is
//! used where posterior responsibilities switch sharply (sparse priors at
//! large precision).

use crate::special::normal_pdf;

/// Default number of Gauss-Hermite nodes.
pub const DEFAULT_ORDER: usize = 61;

/// Nodes and weights for `E f(z)`, `z ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_hermite(DEFAULT_ORDER)
    }
}

impl QuadratureRule {
    /// Gauss-Hermite rule of the given order, rescaled to the standard normal
    /// weight so that the weights sum to one.
    pub fn gauss_hermite(order: usize) -> Self {
        assert!((1..=150).contains(&order), "quadrature order must be in 1..=150");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let m = n.div_ceil(2);
        let mut z = 0.0_f64;
        for i in 0..m {
            // Initial guesses for the roots of the physicists' H_n, largest first.
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                // Orthonormal recurrence for H_n.
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = (j + 1) as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            let w = 2.0 / (pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        // Physicists' weight exp(-x^2) -> standard normal.
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = nodes
            .iter()
            .zip(&weights)
            .map(|(&x, &w)| (x * std::f64::consts::SQRT_2, w / sqrt_pi))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E f(z)` for `z ~ N(0, 1)`.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]`, first split at
/// `breakpoints` (those outside the interval are ignored).
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let mut edges: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|&p| p > a && p < b))
        .chain(std::iter::once(b))
        .collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut stack: Vec<(f64, f64, u32)> = edges.windows(2).map(|w| (w[0], w[1], 0)).collect();
    let mut pieces: Vec<(f64, f64, f64, f64, u32)> = Vec::new();
    let mut total = 0.0;
    let mut err = 0.0;
    for (lo, hi, depth) in stack.drain(..) {
        let (v, e) = gk15(&mut f, lo, hi);
        total += v;
        err += e;
        pieces.push((lo, hi, v, e, depth));
    }
    const MAX_DEPTH: u32 = 40;
    const MAX_PIECES: usize = 4000;
    loop {
        if err <= abs_tol.max(rel_tol * total.abs()) || pieces.len() >= MAX_PIECES {
            break;
        }
        // Bisect the piece with the largest error estimate.
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.4 < MAX_DEPTH)
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap_or((usize::MAX, &pieces[0]));
        if idx == usize::MAX {
            break;
        }
        let (lo, hi, v, e, depth) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        total += v1 + v2 - v;
        err = (err + e1 + e2 - e).max(0.0);
        pieces.push((lo, mid, v1, e1, depth + 1));
        pieces.push((mid, hi, v2, e2, depth + 1));
    }
    // Re-sum in interval order so the result does not depend on refinement history.
    pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
    pieces.iter().map(|p| p.2).sum()
}

/// Half-width of the integration window for standard-normal expectations.
pub const NORMAL_WINDOW: f64 = 12.0;

/// `E f(w)` for `w ~ N(0, 1)` by adaptive integration, split at `breakpoints`.
pub fn normal_expect(mut f: impl FnMut(f64) -> f64, breakpoints: &[f64]) -> f64 {
    let mut pts: Vec<f64> = vec![-6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0];
    pts.extend_from_slice(breakpoints);
    integrate(
        |w| normal_pdf(w) * f(w),
        -NORMAL_WINDOW,
        NORMAL_WINDOW,
        &pts,
        1e-15,
        1e-13,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_hermite_moments() {
        for order in [5, 20, 61, 121] {
            let q = QuadratureRule::gauss_hermite(order);
            assert_relative_eq!(q.expect(|_| 1.0), 1.0, epsilon = 1e-12);
            assert_relative_eq!(q.expect(|z| z * z), 1.0, epsilon = 1e-12);
            assert!(q.expect(|z| z).abs() < 1e-12);
            if order >= 3 {
                assert_relative_eq!(q.expect(|z| z.powi(4)), 3.0, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn gauss_hermite_nodes_sorted_and_symmetric() {
        let q = QuadratureRule::default();
        assert_eq!(q.order(), DEFAULT_ORDER);
        let n = q.nodes();
        assert!(n.windows(2).all(|w| w[0] < w[1]));
        for i in 0..n.len() {
            assert_relative_eq!(n[i], -n[n.len() - 1 - i], epsilon = 1e-12);
        }
    }

    #[test]
    fn adaptive_integrates_sharp_step() {
        // E[1{w > 0.3}] = 1 - Phi(0.3)
        let v = normal_expect(|w| if w > 0.3 { 1.0 } else { 0.0 }, &[0.3]);
        assert_relative_eq!(v, 1.0 - crate::special::normal_cdf(0.3), epsilon = 1e-13);
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, &[], 1e-14, 1e-14);
        assert_relative_eq!(v, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn adaptive_resolves_narrow_sigmoid_without_breakpoint() {
        // Step plus its first smoothing correction c phi(c) pi^2 / (6 k^2);
        // the next term is O(k^-4).
        let (c, k) = (0.2, 1e3);
        let v = normal_expect(|w| crate::special::sigmoid((w - c) * k), &[]);
        let oracle = 1.0 - crate::special::normal_cdf(c)
            + c * normal_pdf(c) * std::f64::consts::PI.powi(2) / (6.0 * k * k);
        assert_relative_eq!(v, oracle, epsilon = 1e-11);
    }
}
