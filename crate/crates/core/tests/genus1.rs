use gluedet::genus1::*;
use gluedet::special::{theta1, theta3};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn theta_and_eta_values() {
    let tau = c(0.0, 1.0);
    assert!(theta1(c(0.0, 0.0), tau).norm() < 1e-15);
    let z = c(0.23, 0.17);
    assert!((theta1(-z, tau) + theta1(z, tau)).norm() < 1e-14);
    // Gamma(1/4) / (2 pi^{3/4})
    let eta_i = 3.625_609_908_221_908_3 / (2.0 * PI.powf(0.75));
    let data = Genus1Data::new(tau).unwrap();
    assert!((data.eta.re - eta_i).abs() < 1e-14 && data.eta.im.abs() < 1e-15);
    // theta_1(z + tau) = -e^{-i pi tau - 2 pi i z} theta_1(z)
    for tau in [c(0.0, 1.0), c(0.5, 1.0), c(-0.3, 0.8)] {
        let lhs = theta1(z + tau, tau);
        let rhs = -(C64::i() * PI * (-tau - 2.0 * z)).exp() * theta1(z, tau);
        assert!((lhs - rhs).norm() < 1e-12 * rhs.norm().max(1.0));
    }
    // characteristics reduce to theta_3 and theta_1
    assert!((theta_char(0.0, 0.0, z, tau) - theta3(z, tau)).norm() < 1e-14);
    assert!((theta_char(0.5, 0.5, z, tau) + theta1(z, tau)).norm() < 1e-14);
}

#[test]
fn green_function_certificate() {
    for tau in [c(0.0, 1.0), c(0.5, 1.0), c(0.2, 1.7)] {
        let data = Genus1Data::new(tau).unwrap();
        let cert = data.certificate;
        assert!(cert.symmetry < 1e-13);
        assert!(cert.normalization.abs() < 1e-6, "{cert:?}");
        assert!(cert.metric_variance < 1e-8);
        assert!((cert.log_metric_limit - data.rho_ar.ln()).abs() < 1e-8);
        assert!(cert.curvature < 1e-5);
    }
    let data = Genus1Data::new(c(0.0, 1.0)).unwrap();
    let (z, w) = (c(0.3, 0.2), c(0.71, 0.66));
    assert!((data.green(z, w).unwrap() - data.green(w, z).unwrap()).abs() < 1e-13);
    assert!(data.green(z, z).is_err());
    assert!(Genus1Data::new(c(0.0, -1.0)).is_err());
}

#[test]
fn admissible_curvature_identity() {
    let data = Genus1Data::new(c(0.5, 1.0)).unwrap();
    let b = AdmissibleBundle::new(vec![c(0.2, 0.1), c(0.6, 0.7)]).unwrap();
    assert_eq!(b.h0(), 2);
    for z in [c(0.45, 0.33), c(0.9, 0.2)] {
        assert!((b.curvature_ratio(&data, z) - 2.0 * PI * 2.0).abs() < 1e-5);
    }
    assert!(AdmissibleBundle::new(vec![]).is_err());
    assert!(theta_norm_periodicity(3, &data) < 1e-12);
}

#[test]
fn landau_ladder_dense_oracle() {
    let data = Genus1Data::new(c(0.0, 1.0)).unwrap();
    for d in [1, 2] {
        let lv = landau_dense_levels(d, &data, 192, 3).unwrap();
        let spacing = LandauLadder { degree: d, area: data.area }.spacing();
        assert!(lv[..d].iter().all(|l| l.abs() < 1e-6 * spacing));
        assert!(lv[d..2 * d].iter().all(|l| (l - spacing).abs() < 1e-6 * spacing), "{lv:?}");
    }
    assert!(landau_dense_levels(1, &Genus1Data::new(c(0.5, 1.0)).unwrap(), 64, 2).is_err());
}

#[test]
fn ladder_determinant_two_routes() {
    let data = Genus1Data::new(c(0.0, 1.0)).unwrap();
    for d in [1, 2, 3] {
        let r = dolbeault_det_torus(d, &data, 32).unwrap();
        assert_eq!(r.dim_ker, d as u64);
        assert!((r.log_det_spectral - r.log_det_closed_form).abs() < 1e-10, "{r:?}");
        // -d [zeta'(0) - log(c) zeta(0)] = (d/2) log(A / 2d)
        assert!((r.log_det_closed_form - d as f64 / 2.0 * (data.area / (2.0 * d as f64)).ln()).abs() < 1e-13);
    }
    assert!(dolbeault_det_torus(0, &data, 32).is_err());
}

#[test]
fn scalar_determinant_kronecker() {
    for tau in [c(0.0, 1.0), c(0.5, 1.0)] {
        let data = Genus1Data::new(tau).unwrap();
        let z = gluedet::spectra::zeta_det(&scalar_laplacian_spectrum(&data, 2e5), 0.0).unwrap();
        assert!((z.log_det - scalar_log_det_closed_form(&data)).abs() < 1e-8);
    }
}

#[test]
fn fay_constant_values() {
    let f = fay_constants(1);
    assert!((f.delta_g - (2.0 * PI).powf(2.0 / 3.0)).abs() < 1e-12);
    assert!((f.delta_g - 3.405_02).abs() < 1e-4);
    assert!((f.epsilon_gd - 1.0 / (2.0 * PI)).abs() < 1e-15);
    assert!((f.exp_c_over_12 - (2.0 * PI).powf(-2.0 / 3.0)).abs() < 1e-14);
    assert_eq!(fay_constants(0).epsilon_gd, 1.0);
    let json = serde_json::to_string(&f).unwrap();
    assert!(json.contains("(2 pi)^(2/3)"));
}

#[test]
fn bosonization_identity() {
    let pts = [c(0.21, 0.13), c(0.6, 0.41)];
    for tau in [c(0.0, 1.0), c(0.5, 1.0)] {
        let data = Genus1Data::new(tau).unwrap();
        for d in [1, 2] {
            let r = bosonization_verify(d, &pts[..d], &data, 64).unwrap();
            assert!(r.residual.abs() < 1e-3, "{r:?}");
            assert!(r.scalar_det_check.abs() < 1e-8);
        }
    }
}

#[test]
fn bosonization_modular_reparametrizations() {
    let tau = c(0.3, 0.8);
    let pts = [c(0.21, 0.13), c(0.6, 0.41)];
    for t in [tau, tau + 1.0, -1.0 / tau] {
        let data = Genus1Data::new(t).unwrap();
        let r = bosonization_verify(2, &pts, &data, 64).unwrap();
        assert!(r.residual.abs() < 1e-6, "{t}: {}", r.residual);
    }
}

#[test]
fn bosonization_rejects_degenerate_points() {
    let data = Genus1Data::new(c(0.0, 1.0)).unwrap();
    let p = c(0.3, 0.3);
    assert!(bosonization_verify(2, &[p, p], &data, 16).is_err());
    assert!(bosonization_verify(2, &[p], &data, 16).is_err());
}

#[test]
fn insertion_identity() {
    let data = Genus1Data::new(c(0.0, 1.0)).unwrap();
    let mut residuals = vec![];
    for p in [c(0.3, 0.2), c(0.7, 0.55), c(0.05, 0.9), c(0.5, 0.5), c(0.92, 0.13)] {
        let r = insertion_verify(&InsertionConfig::new(1, p), &data).unwrap();
        assert!(r.residual.abs() < 1e-3, "{r:?}");
        residuals.push(r.residual);
    }
    let spread = residuals.iter().cloned().fold(f64::MIN, f64::max) - residuals.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 1e-8);
    let r2 = insertion_verify(&InsertionConfig::new(2, c(0.3, 0.2)), &Genus1Data::new(c(0.5, 1.0)).unwrap()).unwrap();
    assert!(r2.residual.abs() < 1e-3);
}

#[test]
fn insertion_basis_change_invariance() {
    let data = Genus1Data::new(c(0.0, 1.0)).unwrap();
    let p = c(0.3, 0.2);
    let r0 = insertion_verify(&InsertionConfig::new(2, p), &data).unwrap();
    let mut cfg = InsertionConfig::new(2, p);
    cfg.basis = Some(vec![vec![c(0.7, 0.2), c(-1.1, 0.4)], vec![c(0.3, -0.9), c(0.5, 0.5)]]);
    let r1 = insertion_verify(&cfg, &data).unwrap();
    assert!((r1.residual - r0.residual).abs() < 1e-12);
    cfg.basis = Some(vec![vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(0.5, 0.0), c(1.0, 0.0)]]);
    assert!(insertion_verify(&cfg, &data).is_err());
    let mut bad = InsertionConfig::new(1, p);
    bad.zeros = vec![p];
    // omega_0 must not vanish at p
    assert!(insertion_verify(&bad, &data).is_err());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    fn upper_half_plane() -> impl Strategy<Value = C64> {
        (-0.5f64..0.5, 0.8f64..2.0).prop_map(|(x, y)| c(x, y))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn green_is_doubly_periodic_and_symmetric(tau in upper_half_plane(), x in 0.05f64..0.95, y in 0.05f64..0.95) {
            let data = Genus1Data::with_grid(tau, 64).unwrap();
            let u = c(x, 0.0) + tau * y;
            let g = data.log_green_diff(u);
            prop_assert!((data.log_green_diff(u + 1.0) - g).abs() < 1e-10);
            prop_assert!((data.log_green_diff(u + tau) - g).abs() < 1e-10);
            prop_assert!((data.log_green_diff(-u) - g).abs() < 1e-10);
        }

        #[test]
        fn level_thetas_share_the_multiplier(tau in upper_half_plane(), x in 0.0f64..1.0, y in 0.0f64..1.0, d in 1usize..4) {
            // theta[k/d, 0](d z, d tau) picks up e^{-i pi d tau - 2 pi i d z} under z -> z + tau
            let z = c(x, 0.0) + tau * y;
            let df = d as f64;
            for k in 0..d {
                let lhs = level_theta(k, d, z + tau, tau);
                let rhs = (C64::i() * PI * (-df * tau - 2.0 * df * z)).exp() * level_theta(k, d, z, tau);
                prop_assert!((lhs - rhs).norm() < 1e-9 * rhs.norm().max(1e-3));
                prop_assert!((level_theta(k, d, z + 1.0, tau) - level_theta(k, d, z, tau)).norm() < 1e-9 * rhs.norm().max(1.0));
            }
        }

        #[test]
        fn scalar_determinant_is_modular_invariant(tau in upper_half_plane()) {
            let a = Genus1Data::with_grid(tau, 64).unwrap();
            let b = Genus1Data::with_grid(-1.0 / tau, 64).unwrap();
            // area-normalized: log Det* - log A is invariant under tau -> -1/tau
            let la = scalar_log_det_closed_form(&a) - a.area.ln();
            let lb = scalar_log_det_closed_form(&b) - b.area.ln();
            prop_assert!((la - lb).abs() < 1e-10, "{} vs {}", la, lb);
        }
    }
}
