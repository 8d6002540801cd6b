use miniamp_core::denoisers::{ChannelSpec, PriorSpec};
use miniamp_core::lowrank::{onehot_denoise_v, permutation_matched_losses};
use miniamp_core::state_evolution::{mmse, prior_moments, scalar_mutual_information};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn prior() -> impl Strategy<Value = PriorSpec> {
    prop_oneof![
        (0.05f64..1.0).prop_map(|rho| PriorSpec::gauss_bernoulli(rho).unwrap()),
        Just(PriorSpec::Rademacher),
        (-1.0f64..1.0, 0.2f64..3.0).prop_map(|(m, v)| PriorSpec::gaussian(m, v).unwrap()),
        (0.1f64..2.0).prop_map(|v| PriorSpec::truncated_nonneg_gaussian(v).unwrap()),
    ]
}

fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

proptest! {
    #[test]
    fn denoiser_mean_is_log_partition_slope(p in prior(), a in 0.0f64..20.0, b in -6.0f64..6.0) {
        let out = p.denoise(a, b).unwrap();
        let h = 1e-5;
        let fd = central(|t| p.log_partition(a, t).unwrap(), b, h);
        prop_assert!((out.mean - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{} vs {}", out.mean, fd);
    }

    #[test]
    fn denoiser_variance_is_mean_slope(p in prior(), a in 0.0f64..20.0, b in -6.0f64..6.0) {
        let out = p.denoise(a, b).unwrap();
        let fd = central(|t| p.denoise(a, t).unwrap().mean, b, 1e-5);
        prop_assert!(out.variance >= 0.0);
        prop_assert!((out.variance - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{} vs {}", out.variance, fd);
    }

    #[test]
    fn log_partition_precision_slope_is_minus_half_second_moment(p in prior(), a in 1e-3f64..10.0, b in -4.0f64..4.0) {
        let out = p.denoise(a, b).unwrap();
        let m2 = out.variance + out.mean * out.mean;
        let fd = central(|t| p.log_partition(t, b).unwrap(), a, 1e-5);
        prop_assert!((fd + 0.5 * m2).abs() < 1e-6 * (1.0 + m2), "{} vs {}", fd, -0.5 * m2);
    }

    #[test]
    fn gout_is_log_partition_slope(
        probit in any::<bool>(),
        delta in 0.01f64..2.0,
        omega in -3.0f64..3.0,
        v in 0.0f64..2.0,
        y_pos in any::<bool>(),
        y_val in -3.0f64..3.0,
    ) {
        let ch = if probit { ChannelSpec::probit(delta) } else { ChannelSpec::gaussian(delta) }.unwrap();
        let y = if probit { if y_pos { 1.0 } else { -1.0 } } else { y_val };
        let (g, dg) = ch.gout(y, omega, v).unwrap();
        let fd_g = central(|w| ch.log_partition(y, w, v).unwrap(), omega, 1e-5);
        let fd_dg = central(|w| ch.gout(y, w, v).unwrap().0, omega, 1e-5);
        prop_assert!((g - fd_g).abs() < 1e-6 * (1.0 + g.abs()), "{} vs {}", g, fd_g);
        prop_assert!((dg - fd_dg).abs() < 1e-5 * (1.0 + dg.abs()), "{} vs {}", dg, fd_dg);
        prop_assert!(dg <= 0.0);
    }

    #[test]
    fn bayes_optimal_moments_agree(rho in 0.05f64..1.0, lambda in 0.01f64..50.0) {
        let p = PriorSpec::gauss_bernoulli(rho).unwrap();
        let (e, v) = prior_moments(&p, lambda, lambda);
        prop_assert!((e - v).abs() < 1e-9 * (1.0 + v), "E {} V {}", e, v);
        prop_assert!(e <= p.variance() + 1e-12);
    }

    #[test]
    fn mutual_information_slope_is_half_mmse(rho in 0.05f64..1.0, snr in 0.05f64..30.0) {
        let p = PriorSpec::gauss_bernoulli(rho).unwrap();
        let h = 1e-4 * snr;
        let fd = central(|s| scalar_mutual_information(&p, s), snr, h);
        let half = 0.5 * mmse(&p, snr);
        prop_assert!((fd - half).abs() < 1e-6 * (1.0 + half), "{} vs {}", fd, half);
    }

    #[test]
    fn onehot_posterior_lies_on_simplex(
        r in 1usize..7,
        seed in prop::collection::vec(-5.0f64..5.0, 49),
        bs in prop::collection::vec(-8.0f64..8.0, 7),
    ) {
        let g = Array2::from_shape_fn((r, r), |(i, j)| seed[i * 7 + j]);
        let a = g.t().dot(&g);
        let b = Array1::from_iter(bs[..r].iter().copied());
        let (p, cov) = onehot_denoise_v(a.view(), b.view()).unwrap();
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        for row in cov.rows() {
            prop_assert!(row.sum().abs() < 1e-12);
        }
        for i in 0..r {
            for j in 0..r {
                prop_assert_eq!(cov[[i, j]], cov[[j, i]]);
            }
        }
    }

    #[test]
    fn onehot_posterior_is_permutation_equivariant(
        perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
        seed in prop::collection::vec(-2.0f64..2.0, 25),
        bs in prop::collection::vec(-4.0f64..4.0, 5),
    ) {
        let g = Array2::from_shape_fn((5, 5), |(i, j)| seed[i * 5 + j]);
        let a = g.t().dot(&g);
        let b = Array1::from(bs);
        let (p, _) = onehot_denoise_v(a.view(), b.view()).unwrap();
        let ap = Array2::from_shape_fn((5, 5), |(i, j)| a[[perm[i], perm[j]]]);
        let bp = Array1::from_shape_fn(5, |i| b[perm[i]]);
        let (q, _) = onehot_denoise_v(ap.view(), bp.view()).unwrap();
        for i in 0..5 {
            prop_assert!((q[i] - p[perm[i]]).abs() < 1e-14);
        }
    }

    #[test]
    fn matched_losses_ignore_cluster_names(
        perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
        u in prop::collection::vec(-2.0f64..2.0, 40),
        noise in prop::collection::vec(-0.3f64..0.3, 40),
        labels in prop::collection::vec(0usize..4, 30),
        flips in prop::collection::vec(0usize..4, 30),
    ) {
        let u0 = Array2::from_shape_vec((10, 4), u).unwrap();
        let est = &u0 + &Array2::from_shape_vec((10, 4), noise).unwrap();
        let guess: Vec<usize> = labels.iter().zip(&flips).map(|(&l, &f)| if f == 0 { (l + 1) % 4 } else { l }).collect();
        let base = permutation_matched_losses(&est, &guess, &u0, &labels).unwrap();
        let renamed = Array2::from_shape_fn((10, 4), |(i, k)| est[[i, perm[k]]]);
        let inverse: Vec<usize> = (0..4).map(|k| perm.iter().position(|&p| p == k).unwrap()).collect();
        let guess_renamed: Vec<usize> = guess.iter().map(|&l| inverse[l]).collect();
        let moved = permutation_matched_losses(&renamed, &guess_renamed, &u0, &labels).unwrap();
        prop_assert!((base.0 - moved.0).abs() < 1e-12 && (base.1 - moved.1).abs() < 1e-12, "{:?} vs {:?}", base, moved);
    }
}
